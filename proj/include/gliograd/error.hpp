#ifndef GLIOGRAD_ERROR_HPP
#define GLIOGRAD_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gg {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCode {
    Config = 2,  // bad flags, unknown config keys, invalid model configs
    Data = 3,    // malformed files, contract violations on inputs, shape errors
    Numeric = 4, // NaN/Inf during training or inference
    Io = 5,      // filesystem failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    ErrorCode code() const { return code_; }
    int exit_code() const { return static_cast<int>(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

} // namespace gg

#endif
