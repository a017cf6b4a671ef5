#include "mcal/parallel.hpp"

#include "mcal/types.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mcal {

int resolve_threads(int requested)
{
    if (const char* env = std::getenv("MCAL_THREADS"); env != nullptr && *env != '\0') {
        try {
            const int value = std::stoi(env);
            if (value > 0) {
                return value;
            }
        } catch (const std::exception&) {
        }
        throw ValidationError("MCAL_THREADS must be a positive integer");
    }
    if (requested > 0) {
        return requested;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn)
{
    std::vector<std::exception_ptr> errors(count);
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers == 1 || count <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        const std::size_t spawn = std::min(workers, count);
        pool.reserve(spawn);
        for (std::size_t w = 0; w < spawn; ++w) {
            pool.emplace_back(work);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

} // namespace mcal
