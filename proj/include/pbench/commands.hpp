#pragma once

#include <string>

#include "pbench/config.hpp"
#include "pbench/evaluate.hpp"

namespace pbench::cli {

// Pipeline commands behind the CLI verbs. Each writes its artifacts plus a
// frozen copy of the effective configuration into the output directory, and
// returns a process exit code (0 on success). Error conditions surface as
// exceptions; the CLI maps them to exit codes 1 (internal) or 2 (user).
int run_generate(const RunConfig& config);
int run_train(const RunConfig& config, model::ModelKind kind);
int run_eval(const RunConfig& config);
int run_report(const RunConfig& config);

// Evaluation parallelism: PRIMING_BENCH_THREADS when set (must be a
// positive integer), otherwise the hardware concurrency capped at 8.
int effective_threads();

// Rendering pieces used by run_report.
std::string render_report_table(const prime::PrimingReport& report);
void write_per_n_csv(const prime::PrimingReport& report,
                     const std::string& path, const std::string& meta);
void write_chart_svg(const prime::PrimingReport& report,
                     const std::string& path, const std::string& meta);

}  // namespace pbench::cli
