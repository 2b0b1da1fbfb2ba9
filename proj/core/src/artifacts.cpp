#include "flsim/artifacts.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace flsim {
namespace {

using json = nlohmann::json;

void put_le_float(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  out.push_back(static_cast<char>(bits & 0xFF));
  out.push_back(static_cast<char>((bits >> 8) & 0xFF));
  out.push_back(static_cast<char>((bits >> 16) & 0xFF));
  out.push_back(static_cast<char>((bits >> 24) & 0xFF));
}

float get_le_float(const char* p) {
  const auto b = [&](int i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(p[i]));
  };
  std::uint32_t bits = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

json parse_header_line(const std::string& blob, const std::string& path, std::size_t& body_at) {
  const std::size_t nl = blob.find('\n');
  if (nl == std::string::npos) {
    throw std::runtime_error(path + ": missing header line");
  }
  body_at = nl + 1;
  try {
    return json::parse(blob.substr(0, nl));
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": bad header: " + e.what());
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_float(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

void write_fp32(const std::string& path, const FlatParams& params) {
  if (!params.layout) throw std::invalid_argument("write_fp32: params carry no layout");
  json segments = json::array();
  for (const auto& seg : params.layout->segments) {
    segments.push_back({{"layer_index", seg.layer_index},
                        {"role", seg.role},
                        {"shape", seg.shape}});
  }
  json header = {{"count", params.values.size()}, {"segments", segments}};
  std::string blob = header.dump();
  blob.push_back('\n');
  blob.reserve(blob.size() + params.values.size() * 4);
  for (float v : params.values) put_le_float(blob, v);
  write_text_file(path, blob);
}

FlatParams read_fp32(const std::string& path) {
  const std::string blob = read_text_file(path);
  std::size_t body_at = 0;
  json header = parse_header_line(blob, path, body_at);
  FlatParams params;
  auto layout = std::make_shared<ParamLayout>();
  try {
    const std::size_t count = header.at("count").get<std::size_t>();
    std::size_t offset = 0;
    for (const auto& seg_json : header.at("segments")) {
      ParamSegment seg;
      seg.layer_index = seg_json.at("layer_index").get<int>();
      seg.role = seg_json.at("role").get<std::string>();
      seg.shape = seg_json.at("shape").get<std::vector<int>>();
      seg.offset = offset;
      seg.count = shape_volume(seg.shape);
      offset += seg.count;
      layout->segments.push_back(std::move(seg));
    }
    layout->total_count = offset;
    if (offset != count) {
      throw std::runtime_error(path + ": header count disagrees with segment shapes");
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": bad header: " + e.what());
  }
  const std::size_t expect = body_at + layout->total_count * 4;
  if (blob.size() != expect) {
    throw std::runtime_error(path + ": expected " + std::to_string(expect) + " bytes, found " +
                             std::to_string(blob.size()));
  }
  params.values.resize(layout->total_count);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    params.values[i] = get_le_float(blob.data() + body_at + i * 4);
  }
  params.layout = std::move(layout);
  return params;
}

void write_updates(const std::string& path, const UpdateSet& set) {
  json header = {{"dim", set.dim()}, {"participant_ids", set.participant_ids}};
  std::string blob = header.dump();
  blob.push_back('\n');
  blob.reserve(blob.size() + set.size() * set.dim() * 4);
  for (const auto& update : set.updates) {
    for (float v : update.values) put_le_float(blob, v);
  }
  write_text_file(path, blob);
}

UpdateSet read_updates(const std::string& path) {
  const std::string blob = read_text_file(path);
  std::size_t body_at = 0;
  json header = parse_header_line(blob, path, body_at);
  std::vector<int> ids;
  std::size_t dim = 0;
  try {
    dim = header.at("dim").get<std::size_t>();
    ids = header.at("participant_ids").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": bad header: " + e.what());
  }
  const std::size_t expect = body_at + ids.size() * dim * 4;
  if (blob.size() != expect) {
    throw std::runtime_error(path + ": expected " + std::to_string(expect) + " bytes, found " +
                             std::to_string(blob.size()));
  }
  std::vector<FlatUpdate> updates(ids.size());
  std::size_t at = body_at;
  for (auto& update : updates) {
    update.values.resize(dim);
    for (std::size_t c = 0; c < dim; ++c, at += 4) {
      update.values[c] = get_le_float(blob.data() + at);
    }
  }
  return UpdateSet::create(std::move(ids), std::move(updates));
}

std::string metrics_csv_header() {
  return "round,asr,accuracy,adversary_selected_cum,accepted_count,clip_bound,noise_sigma\n";
}

std::string metrics_csv_row(const RoundRecord& record) {
  std::string row = std::to_string(record.round);
  row.push_back(',');
  if (record.has_asr) row += format_double(record.asr);
  row.push_back(',');
  if (record.evaluated) row += format_double(record.accuracy);
  row.push_back(',');
  row += std::to_string(record.adversary_selected_cum);
  row.push_back(',');
  row += std::to_string(record.accepted_ids.size());
  row.push_back(',');
  if (record.clip_bound) row += format_double(*record.clip_bound);
  row.push_back(',');
  if (record.noise_sigma) row += format_double(*record.noise_sigma);
  row.push_back('\n');
  return row;
}

void write_metrics_csv(const std::string& path, const std::vector<RoundRecord>& history) {
  std::string blob = metrics_csv_header();
  for (const auto& record : history) blob += metrics_csv_row(record);
  write_text_file(path, blob);
}

std::string round_record_json(const RoundRecord& record) {
  json j;
  j["round"] = record.round;
  j["selected_ids"] = record.selected_ids;
  j["accepted_ids"] = record.accepted_ids;
  j["update_norms"] = record.update_norms;
  j["evaluated"] = record.evaluated;
  j["adversary_selected_cum"] = record.adversary_selected_cum;
  if (record.evaluated) j["accuracy"] = record.accuracy;
  if (record.has_asr) j["asr"] = record.asr;
  if (record.scores) j["scores"] = *record.scores;
  if (record.clip_bound) j["clip_bound"] = *record.clip_bound;
  if (record.noise_sigma) j["noise_sigma"] = *record.noise_sigma;
  return j.dump();
}

void write_rounds_jsonl(const std::string& path, const std::vector<RoundRecord>& history) {
  std::string blob;
  for (const auto& record : history) {
    blob += round_record_json(record);
    blob.push_back('\n');
  }
  write_text_file(path, blob);
}

std::string distance_matrix_csv(const DistanceMatrix& matrix, const std::vector<int>& ids) {
  if (ids.size() != matrix.n) {
    throw std::invalid_argument("distance_matrix_csv: id count does not match matrix");
  }
  std::string blob;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (j > 0) blob.push_back(',');
    blob += std::to_string(ids[j]);
  }
  blob.push_back('\n');
  for (std::size_t i = 0; i < matrix.n; ++i) {
    for (std::size_t j = 0; j < matrix.n; ++j) {
      if (j > 0) blob.push_back(',');
      blob += format_double(matrix.at(i, j));
    }
    blob.push_back('\n');
  }
  return blob;
}

std::string gain_report_csv(const GainReport& report) {
  std::string blob = "participant_id,update_gain,update_sign_gain\n";
  for (const auto& entry : report.entries) {
    blob += std::to_string(entry.participant_id);
    blob.push_back(',');
    blob += format_double(entry.update_gain);
    blob.push_back(',');
    blob += format_double(entry.update_sign_gain);
    blob.push_back('\n');
  }
  return blob;
}

std::vector<std::string> write_activation_pgms(const std::string& path_prefix,
                                               const ActivationGrid& grid) {
  if (grid.mean.shape.size() != 3) {
    throw std::invalid_argument("write_activation_pgms: grid must be [channels, rows, cols]");
  }
  const int channels = grid.mean.shape[0];
  const int rows = grid.mean.shape[1];
  const int cols = grid.mean.shape[2];
  std::vector<std::string> paths;
  for (int ch = 0; ch < channels; ++ch) {
    const std::size_t base =
        static_cast<std::size_t>(ch) * static_cast<std::size_t>(rows * cols);
    float max_v = 0.0f;
    for (int i = 0; i < rows * cols; ++i) {
      max_v = std::max(max_v, grid.mean.values[base + static_cast<std::size_t>(i)]);
    }
    std::string blob = "P2\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (c > 0) blob.push_back(' ');
        const float v = grid.mean.values[base + static_cast<std::size_t>(r * cols + c)];
        int pixel = 0;
        if (max_v > 0.0f) {
          pixel = static_cast<int>(
              std::lround(static_cast<double>(v) / static_cast<double>(max_v) * 255.0));
        }
        blob += std::to_string(std::clamp(pixel, 0, 255));
      }
      blob.push_back('\n');
    }
    std::string path = path_prefix + "_c" + std::to_string(ch) + ".pgm";
    write_text_file(path, blob);
    paths.push_back(std::move(path));
  }
  return paths;
}

std::string activation_grid_csv(const ActivationGrid& grid) {
  if (grid.mean.shape.size() != 3) {
    throw std::invalid_argument("activation_grid_csv: grid must be [channels, rows, cols]");
  }
  const int channels = grid.mean.shape[0];
  const int rows = grid.mean.shape[1];
  const int cols = grid.mean.shape[2];
  std::string blob = "channel,row,col,value\n";
  std::size_t at = 0;
  for (int ch = 0; ch < channels; ++ch) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c, ++at) {
        blob += std::to_string(ch);
        blob.push_back(',');
        blob += std::to_string(r);
        blob.push_back(',');
        blob += std::to_string(c);
        blob.push_back(',');
        blob += format_float(grid.mean.values[at]);
        blob.push_back('\n');
      }
    }
  }
  return blob;
}

}  // namespace flsim
