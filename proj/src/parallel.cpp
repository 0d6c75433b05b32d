#include "sll/parallel.hpp"

#include <cstdlib>
#include <string>

namespace sll {

unsigned default_worker_count()
{
    if (const char* env = std::getenv("SLL_WORKERS"))
    {
        try
        {
            const long v = std::stol(env);
            if (v > 0)
                return static_cast<unsigned>(v);
        }
        catch (const std::exception&)
        {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

}  // namespace sll
