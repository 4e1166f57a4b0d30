#pragma once

#include <stdexcept>

namespace tetvol {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace tetvol
