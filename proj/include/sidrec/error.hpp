#pragma once

#include <stdexcept>
#include <string>

namespace sidrec {

// Exception categories map one-to-one onto the CLI exit codes.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class compute_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class exit_code : int { ok = 0, config = 2, data = 3, runtime = 4 };

} // namespace sidrec
