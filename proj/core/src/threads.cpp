#include "efc/threads.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

#ifdef __GLIBC__
#include <malloc.h>

namespace {
// Training allocates and frees ~100MB of im2col/activation buffers per step.
// Keep large blocks in the arena instead of mmap/munmap round trips, so the
// pages stay faulted in across steps.
__attribute__((constructor)) void efc_malloc_tuning() {
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
}
}  // namespace
#endif

namespace efc {
namespace {

int env_threads() {
    const char* s = std::getenv("EF_THREADS");
    if (s == nullptr) return 0;
    try {
        int n = std::stoi(s);
        return n > 0 ? n : 0;
    } catch (...) {
        return 0;
    }
}

std::atomic<int>& override_slot() {
    static std::atomic<int> v{0};
    return v;
}

}  // namespace

int max_threads() {
    int n = override_slot().load(std::memory_order_relaxed);
    if (n > 0) return n;
    n = env_threads();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void set_max_threads(int n) {
    override_slot().store(n > 0 ? n : 0, std::memory_order_relaxed);
}

SingleThreadGuard::SingleThreadGuard() : saved_(override_slot().load(std::memory_order_relaxed)) {
    set_max_threads(1);
}

SingleThreadGuard::~SingleThreadGuard() {
    override_slot().store(saved_, std::memory_order_relaxed);
}

}  // namespace efc
