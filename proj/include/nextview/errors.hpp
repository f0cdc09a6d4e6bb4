#pragma once

#include <stdexcept>
#include <string>

namespace nextview {

// Dataset/checkpoint/config problems: missing files, schema violations.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses and other numeric breakdowns.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nextview
