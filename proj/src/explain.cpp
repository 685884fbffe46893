// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "patchfuse/errors.hpp"

namespace patchfuse {
namespace {

// [Lq x Lkv] view of the requested head.
Tensor select_head(const AttentionMap& map, std::optional<std::size_t> head) {
  if (!head) return map.averaged;
  if (map.per_head.rank() != 3) throw ShapeError("attention map has no per-head weights");
  const std::size_t heads = map.per_head.shape[0], lq = map.per_head.shape[1], lkv = map.per_head.shape[2];
  if (*head >= heads) {
    throw LookupError("head " + std::to_string(*head) + " out of range (map has " + std::to_string(heads) + ")");
  }
  const auto begin = map.per_head.data.begin() + static_cast<std::ptrdiff_t>(*head * lq * lkv);
  return Tensor({lq, lkv}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(lq * lkv)));
}

Heatmap finish(Tensor cropped, std::optional<std::size_t> head) {
  Heatmap hm;
  hm.values = min_max_normalize(cropped);
  hm.head = head ? std::to_string(*head) : "averaged";
  return hm;
}

std::string csv_field(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      rows.push_back(std::move(row));
      row.clear();
      field.clear();
      field_started = false;
    } else if (c != '\r') {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field", rows.size() + 1);
  if (field_started || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Tensor min_max_normalize(const Tensor& m) {
  Tensor out = m;
  if (m.data.empty()) return out;
  const auto [lo, hi] = std::minmax_element(m.data.begin(), m.data.end());
  const double min = *lo, range = *hi - *lo;
  for (double& v : out.data) v = range > 0.0 ? (v - min) / range : 0.0;
  return out;
}

Heatmap extract_heatmap(const AttentionMap& map, std::size_t valid_q, std::size_t valid_kv,
                        std::optional<std::size_t> head) {
  if (valid_q == 0 || valid_kv == 0) throw ShapeError("heatmap valid lengths must be positive");
  const Tensor full = select_head(map, head);
  if (valid_q > full.rows() || valid_kv > full.cols()) {
    throw ShapeError("heatmap crop " + std::to_string(valid_q) + "x" + std::to_string(valid_kv) +
                     " exceeds captured map " + shape_str(full.shape));
  }
  Tensor cropped({valid_q, valid_kv});
  for (std::size_t i = 0; i < valid_q; ++i)
    for (std::size_t j = 0; j < valid_kv; ++j) cropped(i, j) = full(i, j);
  return finish(std::move(cropped), head);
}

Heatmap extract_heatmap_segments(const AttentionMap& map, std::size_t valid_q, std::optional<std::size_t> head) {
  const Tensor full = select_head(map, head);
  std::vector<std::size_t> cols;
  for (const auto& seg : map.kv_segments) {
    if (seg.end > full.cols() || seg.begin > seg.end) throw ShapeError("key segment outside the captured map");
    for (std::size_t j = seg.begin; j < seg.end; ++j) cols.push_back(j);
  }
  if (valid_q == 0 || cols.empty()) throw ShapeError("heatmap valid lengths must be positive");
  if (valid_q > full.rows()) throw ShapeError("heatmap query crop exceeds captured map");
  Tensor cropped({valid_q, cols.size()});
  for (std::size_t i = 0; i < valid_q; ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) cropped(i, j) = full(i, cols[j]);
  return finish(std::move(cropped), head);
}

HeatmapFormat parse_heatmap_format(const std::string& s) {
  if (s == "csv") return HeatmapFormat::csv;
  if (s == "json") return HeatmapFormat::json;
  if (s == "pgm") return HeatmapFormat::pgm;
  throw ConfigError("unknown heatmap format '" + s + "' (expected csv, json or pgm)");
}

nlohmann::json heatmap_to_json(const Heatmap& hm) {
  nlohmann::json values = nlohmann::json::array();
  for (std::size_t i = 0; i < hm.values.rows(); ++i) {
    const auto r = hm.values.row(i);
    values.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"query_tokens", hm.query_tokens}, {"key_tokens", hm.key_tokens}, {"head", hm.head}, {"values", values}};
}

Heatmap heatmap_from_json(const nlohmann::json& j) {
  Heatmap hm;
  try {
    hm.query_tokens = j.at("query_tokens").get<std::vector<std::string>>();
    hm.key_tokens = j.at("key_tokens").get<std::vector<std::string>>();
    hm.head = j.at("head").get<std::string>();
    const auto rows = j.at("values").get<std::vector<std::vector<double>>>();
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != cols) throw SchemaError("values", 0, "ragged heatmap rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    hm.values = Tensor({rows.size(), cols}, std::move(flat));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("heatmap", 0, e.what());
  }
  return hm;
}

std::string heatmap_to_csv(const Heatmap& hm) {
  const std::size_t rows = hm.values.rows(), cols = hm.values.cols();
  std::string out = csv_field(hm.head);
  for (std::size_t j = 0; j < cols; ++j) out += "," + csv_field(j < hm.key_tokens.size() ? hm.key_tokens[j] : "");
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    out += csv_field(i < hm.query_tokens.size() ? hm.query_tokens[i] : "");
    for (std::size_t j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", hm.values(i, j));
      out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Heatmap heatmap_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw ParseError("empty heatmap CSV", 1);
  Heatmap hm;
  hm.head = rows[0][0];
  hm.key_tokens.assign(rows[0].begin() + 1, rows[0].end());
  const std::size_t cols = hm.key_tokens.size();
  std::vector<double> flat;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != cols + 1) throw ParseError("heatmap CSV row has the wrong number of cells", i + 1);
    hm.query_tokens.push_back(rows[i][0]);
    for (std::size_t j = 1; j <= cols; ++j) {
      try {
        std::size_t used = 0;
        flat.push_back(std::stod(rows[i][j], &used));
        if (used != rows[i][j].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError("bad heatmap value '" + rows[i][j] + "'", i + 1);
      }
    }
  }
  hm.values = Tensor({hm.query_tokens.size(), cols}, std::move(flat));
  return hm;
}

std::string heatmap_to_pgm(const Heatmap& hm) {
  const std::size_t rows = hm.values.rows(), cols = hm.values.cols();
  std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (double v : hm.values.data) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    out += static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0)));
  }
  return out;
}

void export_heatmap(const Heatmap& hm, const std::filesystem::path& path, HeatmapFormat format) {
  std::string body;
  switch (format) {
    case HeatmapFormat::csv: body = heatmap_to_csv(hm); break;
    case HeatmapFormat::json: body = heatmap_to_json(hm).dump(2) + "\n"; break;
    case HeatmapFormat::pgm: body = heatmap_to_pgm(hm); break;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Heatmap import_heatmap(const std::filesystem::path& path, HeatmapFormat format) {
  const std::string text = read_file(path);
  switch (format) {
    case HeatmapFormat::csv: return heatmap_from_csv(text);
    case HeatmapFormat::json:
      try {
        return heatmap_from_json(nlohmann::json::parse(text));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), 0);
      }
    case HeatmapFormat::pgm: break;
  }
  throw ConfigError("pgm export is lossy; import supports csv and json");
}

}  // namespace patchfuse
