// Copyright 2026 The malk Authors
// SPDX-License-Identifier: Apache-2.0
//

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "malk/linalg/kernels.hpp"

namespace malk::kernels {
namespace {

const KernelTable* initial_table() noexcept {
    const char* env = std::getenv("MALK_KERNELS");
    const std::string_view want = env ? env : "auto";
    if (want == "scalar") return &scalar_table();
    if (const KernelTable* t = avx2_table()) return t;
    return &scalar_table();
}

std::atomic<const KernelTable*>& slot() noexcept {
    static std::atomic<const KernelTable*> current{initial_table()};
    return current;
}

}  // namespace

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool select_backend(Backend backend) noexcept {
    const KernelTable* table = nullptr;
    switch (backend) {
    case Backend::Scalar:
        table = &scalar_table();
        break;
    case Backend::Avx2:
        table = avx2_table();
        break;
    case Backend::Auto:
        table = avx2_table() ? avx2_table() : &scalar_table();
        break;
    }
    if (table == nullptr) return false;
    slot().store(table, std::memory_order_release);
    return true;
}

}  // namespace malk::kernels
