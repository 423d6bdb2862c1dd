#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"

#include "distortlab/calibrate.hpp"
#include "distortlab/equilibrium.hpp"
#include "distortlab/global.hpp"
#include "distortlab/lnd.hpp"
#include "distortlab/model.hpp"
#include "distortlab/pressure.hpp"
#include "distortlab/qd.hpp"
#include "distortlab/sampling.hpp"

namespace distortlab {

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

nlohmann::json to_json(const GenerationRecord& record, const TokenModel& model);
/// One JSON object per line, in the order given.
std::string to_jsonl(std::span<const GenerationRecord> records, const TokenModel& model);

nlohmann::json to_json(const RejectionStats& stats);
nlohmann::json to_json(const LndRecord& record, const TokenModel& model);
nlohmann::json to_json(const CalibrationResult& result);
nlohmann::json to_json(const VariationalCheck& check);
nlohmann::json to_json(const ZeroTempReport& report, const TokenModel& model);
nlohmann::json to_json(const PressureResult& result);

/// Columns completion_ids, completion_text, prob, log_p; descending prob,
/// then lexicographic ids.
std::string to_csv(const SequenceDistribution& dist, const TokenModel& model);
/// Columns decoder, level, value.
std::string to_csv(const QuantileTable& table);
/// Columns decoder_kind, param, mode, entropy, entropy_stderr, nll,
/// nll_stderr, n, exact, entropy_per_token, nll_per_token, error.
std::string to_csv(std::span<const QdPoint> points);

/// Entropy against NLL, one colored series per (kind, mode).
std::string to_svg(std::span<const QdPoint> points, std::string_view title = "entropy vs negative log-likelihood");

}  // namespace distortlab
