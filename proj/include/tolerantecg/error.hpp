#pragma once

#include <stdexcept>
#include <string>

namespace tecg {

// Error categories map onto CLI exit codes: config -> 2, data -> 3, numeric -> 4.
enum class errc {
    // signal I/O
    missing_file,
    shape_mismatch,
    invalid_samples,
    invalid_rate,
    invalid_band,
    empty_input,
    parse_error,
    // corruption
    bank_too_short,
    zero_power_lead,
    length_mismatch,
    unsupported_lead_count,
    // cfr
    empty_database,
    // nn / losses
    dimension_mismatch,
    batch_too_small,
    non_finite,
    empty_batch,
    // trainer / evalkit
    corrupt_checkpoint,
    config_mismatch,
    degenerate_labels,
    no_positives,
    invalid_config,
};

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

    errc code() const { return code_; }

    // Exit code category per the CLI contract.
    int exit_code() const {
        switch (code_) {
        case errc::invalid_rate:
        case errc::invalid_band:
        case errc::invalid_config:
        case errc::config_mismatch:
        case errc::unsupported_lead_count:
            return 2;
        case errc::non_finite:
        case errc::batch_too_small:
        case errc::degenerate_labels:
        case errc::no_positives:
        case errc::zero_power_lead:
            return 4;
        default:
            return 3;
        }
    }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw Error(code, what); }

}  // namespace tecg
