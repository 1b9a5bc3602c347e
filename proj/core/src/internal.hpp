#pragma once

#include <cstddef>
#include <string>

#include "masolab/errors.hpp"

namespace masolab::detail {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                             ", got " + std::to_string(got));
    }
}

}  // namespace masolab::detail
