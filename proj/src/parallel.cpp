#include "ntktst/parallel.hpp"

#include <cstdlib>
#include <string>

namespace ntktst {

namespace {
std::atomic<int> g_threads{0};
}

void set_thread_count(int n) { g_threads = n > 0 ? n : 0; }

int thread_count() {
    if (int n = g_threads.load(); n > 0) return n;
    if (const char* env = std::getenv("NTK_TST_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

}  // namespace ntktst
