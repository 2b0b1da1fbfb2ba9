#pragma once

#include <string>
#include <vector>

#include "flsim/aggregation.hpp"
#include "flsim/federation.hpp"
#include "flsim/metrics.hpp"
#include "flsim/model.hpp"

namespace flsim {

// Shortest decimal form that round-trips, '.' decimal point.
std::string format_double(double v);
std::string format_float(float v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Flat parameter files (.fp32): one JSON header line
//   {"count": N, "segments": [{"layer_index", "role", "shape"}, ...]}
// followed by N little-endian 32-bit floats in segment order.
void write_fp32(const std::string& path, const FlatParams& params);
FlatParams read_fp32(const std::string& path);

// Per-round update dumps: one JSON header line
//   {"dim": D, "participant_ids": [...]}
// followed by one D-float little-endian row per participant, ascending by id.
void write_updates(const std::string& path, const UpdateSet& set);
UpdateSet read_updates(const std::string& path);

// metrics.csv: header row then one row per round with columns
// round,asr,accuracy,adversary_selected_cum,accepted_count,clip_bound,noise_sigma.
// Cells without a value (rounds not evaluated, rules without clipping) are
// left empty. '\n' line endings, UTF-8, byte-reproducible.
std::string metrics_csv_header();
std::string metrics_csv_row(const RoundRecord& record);
void write_metrics_csv(const std::string& path, const std::vector<RoundRecord>& history);

// One JSON object per round with the full record, keys sorted.
std::string round_record_json(const RoundRecord& record);
void write_rounds_jsonl(const std::string& path, const std::vector<RoundRecord>& history);

// Square matrix CSV with a header row of participant ids.
std::string distance_matrix_csv(const DistanceMatrix& matrix, const std::vector<int>& ids);

// participant_id,update_gain,update_sign_gain rows in report order.
std::string gain_report_csv(const GainReport& report);

// ASCII PGM (P2), one per channel, each normalized by its own max value;
// returns the file names written (prefix + "_c<channel>.pgm").
std::vector<std::string> write_activation_pgms(const std::string& path_prefix,
                                               const ActivationGrid& grid);
// Raw values as channel,row,col,value rows.
std::string activation_grid_csv(const ActivationGrid& grid);

}  // namespace flsim
