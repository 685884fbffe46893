// SPDX-License-Identifier: Apache-2.0
//
// Attention heatmaps. The captured map is cropped to the real query and key
// tokens first and only then min-max normalized, so weight sitting on pad
// positions never sets the scale.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchfuse/fusion.hpp"

namespace patchfuse {

struct Heatmap {
  Tensor values;  // [valid_q x valid_kv], in [0, 1]
  std::vector<std::string> query_tokens;
  std::vector<std::string> key_tokens;
  std::string head = "averaged";  // or the head index
};

/// Crops [0, valid_q) x [0, valid_kv) of the head (or head-averaged) map and
/// min-max normalizes the block. A constant block becomes all zeros.
Heatmap extract_heatmap(const AttentionMap& map, std::size_t valid_q, std::size_t valid_kv,
                        std::optional<std::size_t> head = std::nullopt);

/// Crops the query rows to valid_q and the key columns to the map's
/// kv_segments (real added tokens, then real deleted tokens) before
/// normalizing.
Heatmap extract_heatmap_segments(const AttentionMap& map, std::size_t valid_q,
                                 std::optional<std::size_t> head = std::nullopt);

/// Min-max normalization of a whole matrix, constant → zeros.
Tensor min_max_normalize(const Tensor& m);

enum class HeatmapFormat { csv, json, pgm };
HeatmapFormat parse_heatmap_format(const std::string& s);

nlohmann::json heatmap_to_json(const Heatmap& hm);
Heatmap heatmap_from_json(const nlohmann::json& j);

/// CSV: header row of key tokens (first cell holds the head), then one row per query
/// token. Values are written with 17 significant digits.
std::string heatmap_to_csv(const Heatmap& hm);
Heatmap heatmap_from_csv(const std::string& text);

/// Binary grayscale P5, one pixel per cell, round(255 * value).
std::string heatmap_to_pgm(const Heatmap& hm);

void export_heatmap(const Heatmap& hm, const std::filesystem::path& path, HeatmapFormat format);
Heatmap import_heatmap(const std::filesystem::path& path, HeatmapFormat format);

}  // namespace patchfuse
