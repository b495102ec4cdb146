#pragma once

#include <stdexcept>
#include <string>

namespace mott {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was not met (bad range, empty input, ...).
class invalid_input : public error {
public:
    using error::error;
};

/// A model invariant does not hold, e.g. a collapsed hysteresis window.
class invariant_violation : public error {
public:
    using error::error;
};

/// Iterative procedure failed, or a target is numerically unreachable.
class numerical_failure : public error {
public:
    using error::error;
};

/// Bias point outside the deterministic oscillation window.
class not_oscillating : public error {
public:
    not_oscillating(const std::string& what, bool threshold_failed, bool holding_failed)
        : error(what), threshold_failed_(threshold_failed), holding_failed_(holding_failed) {}

    /// v_ar <= v_th: the rising branch never reaches the threshold.
    [[nodiscard]] bool threshold_failed() const noexcept { return threshold_failed_; }
    /// v_af >= v_hl: the falling branch never reaches the holding voltage.
    [[nodiscard]] bool holding_failed() const noexcept { return holding_failed_; }

private:
    bool threshold_failed_;
    bool holding_failed_;
};

/// Target voltage lies on the far side of the asymptote (escape regime).
class unreachable_target : public numerical_failure {
public:
    using numerical_failure::numerical_failure;
};

/// Malformed experiment configuration; the message carries the JSON path.
class config_error : public error {
public:
    using error::error;
};

}  // namespace mott
