#pragma once

#include <string>

#include "sac/trainer.hpp"

namespace sac {

// Line-delimited JSON records with fixed field names. wall_ms is the only
// field excluded from byte-for-byte reproducibility comparisons.
std::string metrics_line(const StepMetrics& m);
std::string metrics_line(const EvalMetrics& m);

// Validates one emitted line against the schema; returns false and fills
// `err` on any missing/mistyped/non-finite field.
bool validate_metrics_line(const std::string& line, std::string* err = nullptr);

// Strips the wall_ms field, for reproducibility comparisons.
std::string strip_wall_ms(const std::string& line);

}  // namespace sac
