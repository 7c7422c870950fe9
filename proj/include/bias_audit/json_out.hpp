#pragma once

#include "bias_audit/analysis.hpp"
#include "bias_audit/ceat.hpp"
#include "bias_audit/debias.hpp"
#include "bias_audit/extrinsic.hpp"
#include "bias_audit/mdl.hpp"
#include "bias_audit/synth.hpp"

#include <json.hpp>

#include <ostream>
#include <string>

namespace bias_audit::io {

using Json = nlohmann::json;

/// Rounds a double to 6 significant digits; -0 becomes 0.
double round6(double v);

/// Sorted keys, 2-space indent, floats rounded to 6 significant digits,
/// non-finite numbers as null, trailing newline.
std::string canonical_dump(const Json& j);

Json to_json(const probe::ProbeConfig& c);
Json to_json(const extrinsic::GapReport& r);
Json to_json(const extrinsic::DivergenceResult& r);
Json to_json(const mdl::MdlReport& r);
Json to_json(const ceat::WeatResult& r);
Json to_json(const ceat::CeatResult& r);
Json to_json(const debias::TransformReport& r);
Json to_json(const analysis::PermutationResult& r);
Json to_json(const analysis::CorrelationCell& c);
Json to_json(const synth::SynthConfig& c);
Json to_json(const synth::ExperimentConfig& c);
Json to_json(const synth::ExtrinsicMetrics& m);
Json to_json(const synth::CellResult& c);
Json to_json(const synth::ExperimentReport& r);

/// Reads an experiment config; absent keys keep their defaults. Throws INVALID_CONFIG.
synth::ExperimentConfig experiment_config_from_json(const Json& j);

/// strategy,metric,before_mean,before_std,after_mean,after_std,n,p_before,p_after
void write_table1_csv(std::ostream& out, const synth::ExperimentReport& r);
/// intrinsic,extrinsic,before_r2,after_r2,n_points
void write_table3_csv(std::ostream& out, const synth::ExperimentReport& r);

/// Shortest text of round6(v); "UNDEFINED" for nullopt.
std::string format6(std::optional<double> v);

}  // namespace bias_audit::io
