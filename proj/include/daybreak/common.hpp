#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace daybreak {

// Error taxonomy. DataError maps to CLI exit code 2, NumericalError to 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : NumericalError {
    using NumericalError::NumericalError;
};
struct DegenerateResponsibility : NumericalError {
    using NumericalError::NumericalError;
};
struct AllRunsFailed : NumericalError {
    using NumericalError::NumericalError;
};
struct NumericalUnderflow : NumericalError {
    using NumericalError::NumericalError;
};
struct SamplerStuck : NumericalError {
    using NumericalError::NumericalError;
};
struct InstanceTooLarge : DataError {
    using DataError::DataError;
};
struct NoNocturnalData : DataError {
    using DataError::DataError;
};
struct EmptyDataset : DataError {
    using DataError::DataError;
};

// Sentinel for missing class labels in integer sequences.
inline constexpr int kMissingLabel = -1;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed for a (base, salt...) tuple. Used to give every
// restart / chain its own deterministic stream regardless of thread count.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(base ^ 0x6a09e667f3bcc908ULL) ^ splitmix64(a) ^ (splitmix64(b) << 1));
}

// Runs fn(i) for i in [0, n). Parallelizes over a few threads when the range
// is large enough; fn must write only to its own index slot.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t grain = 16) {
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (n < grain || hw < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t n_threads = std::min(hw, (n + grain - 1) / grain);
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (std::size_t w = 0; w < n_threads; ++w) {
        workers.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += n_threads) fn(i);
        });
    }
    for (auto& t : workers) t.join();
}

}  // namespace daybreak
