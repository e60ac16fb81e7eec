#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "fibretrap/experiments.hpp"

namespace fibretrap::exp {

void parallel_for(std::size_t n, int threads, std::function<void(std::size_t)> const& fn)
{
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_index = n;
    std::exception_ptr failure;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++)
        {
            try
            {
                fn(i);
            }
            catch (...)
            {
                std::lock_guard lock(mu);
                if (i < failed_index)
                {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(work);
    }
    if (failure)
        std::rethrow_exception(failure);
}

}  // namespace fibretrap::exp
