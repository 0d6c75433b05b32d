// Replicate-parallel fan-out with ordered reduction.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "sll/stats.hpp"

namespace sll {

/// How a batch of independent replicates is generated. Replicate i always
/// draws from RandomStream(seed, stream_offset + i), so results depend only
/// on (seed, replicates) and never on the worker count.
struct ReplicatePlan
{
    std::uint64_t seed = 1;
    std::uint64_t replicates = 1;
    unsigned workers = 0;  ///< 0 = default_worker_count()
    std::uint64_t stream_offset = 0;
};

/// SLL_WORKERS if set and positive, otherwise hardware concurrency.
unsigned default_worker_count();

/// Number of contiguous replicate groups. Fixed by the replicate count so
/// that group-level statistics (jackknife, bootstrap) are reproducible.
inline std::size_t group_count(std::uint64_t replicates)
{
    return static_cast<std::size_t>(std::min<std::uint64_t>(replicates, 256));
}

/// Runs `body(acc, replicate_index, stream)` for every replicate, filling one
/// accumulator per replicate group. Groups are processed by a worker pool and
/// returned in ascending group order; merging them left to right gives a
/// result that is independent of the number of workers.
template<class Acc, class Body>
std::vector<Acc> run_grouped(const ReplicatePlan& plan, const Acc& prototype,
                             Body&& body)
{
    const std::uint64_t total = plan.replicates;
    const std::size_t groups = group_count(total);
    std::vector<Acc> out(groups, prototype);
    if (groups == 0)
        return out;

    auto group_begin = [&](std::size_t g) {
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(total) * g) / groups);
    };

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (;;)
        {
            const std::size_t g = next.fetch_add(1);
            if (g >= groups)
                return;
            try
            {
                for (std::uint64_t i = group_begin(g); i < group_begin(g + 1); ++i)
                {
                    RandomStream rng(plan.seed, plan.stream_offset + i);
                    body(out[g], i, rng);
                }
            }
            catch (...)
            {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next.store(groups);
            }
        }
    };

    unsigned workers = plan.workers ? plan.workers : default_worker_count();
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, groups));
    if (workers <= 1)
    {
        work();
    }
    else
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back(work);
    }
    if (failure)
        std::rethrow_exception(failure);
    return out;
}

/// Left-to-right merge of grouped accumulators.
template<class Acc>
Acc merge_in_order(const std::vector<Acc>& groups, const Acc& prototype)
{
    Acc total = prototype;
    for (const auto& g : groups)
        total.merge(g);
    return total;
}

}  // namespace sll
