#pragma once

#include <stdexcept>
#include <string>

namespace strukt {

// Base for everything the library throws.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unsupported file contents (WAV headers, model files, dumps).
struct FormatError : Error {
    using Error::Error;
};

// Text annotation / manifest parse failures; carries a 1-based line number
// when one is known (0 otherwise).
struct ParseError : Error {
    ParseError(const std::string& msg, int line_no = 0)
        : Error(line_no > 0 ? msg + " (line " + std::to_string(line_no) + ")" : msg),
          line(line_no) {}
    int line;
};

// Invalid configuration (bad mel layout, parameter/config mismatch, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Runtime input that violates an operation's precondition.
struct InputError : Error {
    using Error::Error;
};

// Internal contract breaches (non-scalar backward root, shape mismatch).
struct ContractError : Error {
    using Error::Error;
};

// Non-finite loss or similar numeric blow-up during training.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace strukt
