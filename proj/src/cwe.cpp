// SPDX-License-Identifier: Apache-2.0

#include "patchfuse/cwe.hpp"

#include <cctype>
#include <unordered_set>

#include "patchfuse/errors.hpp"

namespace patchfuse::cwe {

const std::vector<CategoryRow>& category_table() {
  static const std::vector<CategoryRow> rows = {
      {"CWE-664", 1, 1, 156, {664}},
      {"CWE-707", 2, 1, 90, {707}},
      {"CWE-710", 3, 1, 83, {710}},
      {"CWE-682", 4, 1, 57, {682}},
      {"CWE-691", 5, 1, 58, {691}},
      {"CWE-1", 6, 1, 27, {693, 435, 697, 703, 417}},
      {"CWE-284", 7, 1, 33, {284}},
      {"CWE-1000", 8, 1, 26, {1000}},
      {"CWE-118", 9, 2, 398, {118}},
      {"CWE-404", 10, 2, 75, {404}},
      {"CWE-668", 11, 2, 47, {668}},
      {"CWE-2", 12, 2, 40, {913, 706, 704, 669, 666, 665}},
  };
  return rows;
}

namespace {

// Research-view primary parents for weaknesses that commonly appear in
// vulnerability-fix corpora, down to the categories above.
const std::unordered_map<int, int>& bundled_edges() {
  static const std::unordered_map<int, int> edges = {
      // CWE-118 subtree
      {119, 118}, {120, 119}, {125, 119}, {466, 119}, {786, 119}, {787, 119}, {788, 119},
      {805, 119}, {822, 119}, {823, 119}, {824, 119}, {825, 119}, {126, 125}, {127, 125},
      {121, 787}, {122, 787}, {123, 787}, {124, 786}, {806, 805}, {415, 825}, {416, 825},
      // CWE-404 subtree
      {772, 404}, {401, 772}, {775, 404}, {459, 404}, {763, 404}, {762, 763}, {590, 762},
      // CWE-664 direct children without their own label
      {400, 664}, {770, 400}, {789, 770}, {610, 664}, {611, 610}, {221, 664}, {372, 664},
      {410, 664}, {471, 664}, {485, 664}, {922, 664}, {1229, 664}, {1250, 664},
      // CWE-668 subtree
      {200, 668}, {134, 668}, {427, 668}, {428, 668}, {552, 668}, {201, 200}, {203, 200},
      {209, 200}, {213, 200}, {215, 200}, {359, 200}, {497, 200}, {538, 200}, {532, 538},
      // CWE-2 members' subtrees
      {908, 665}, {909, 665}, {1188, 665}, {456, 665}, {457, 908}, {672, 666}, {613, 672},
      {212, 669}, {434, 669}, {494, 669}, {565, 669}, {829, 669}, {681, 704}, {843, 704},
      {1389, 704}, {194, 681}, {195, 681}, {196, 681}, {197, 681}, {22, 706}, {41, 706},
      {59, 706}, {66, 706}, {98, 706}, {23, 22}, {36, 22}, {470, 913}, {502, 913},
      {914, 913}, {915, 913}, {1321, 915},
      // CWE-707 subtree
      {20, 707}, {74, 707}, {116, 707}, {138, 707}, {170, 707}, {463, 707}, {1284, 20},
      {1285, 20}, {1287, 20}, {1288, 20}, {1289, 20}, {606, 1284}, {129, 1285}, {75, 74},
      {77, 74}, {79, 74}, {89, 74}, {91, 74}, {93, 74}, {94, 74}, {99, 74}, {943, 74},
      {1236, 74}, {78, 77}, {88, 77}, {80, 79}, {83, 79}, {87, 79}, {643, 91}, {652, 91},
      {117, 116}, {838, 116},
      // CWE-710 subtree
      {1041, 710}, {1044, 710}, {1059, 710}, {1061, 710}, {1076, 710}, {1120, 710},
      {1164, 710}, {477, 710}, {484, 710}, {657, 710}, {684, 710}, {758, 710}, {1177, 710},
      {1357, 710}, {561, 1164}, {563, 1164}, {474, 758}, {562, 758}, {587, 758}, {588, 758},
      // CWE-682 subtree
      {131, 682}, {190, 682}, {191, 682}, {193, 682}, {369, 682}, {1335, 682}, {1339, 682},
      {680, 190}, {467, 131},
      // CWE-691 subtree
      {362, 691}, {430, 691}, {662, 691}, {670, 691}, {696, 691}, {705, 691}, {799, 691},
      {834, 691}, {841, 691}, {364, 362}, {366, 362}, {367, 362}, {368, 362}, {421, 362},
      {1223, 362}, {667, 662}, {617, 670}, {674, 834}, {835, 834},
      // CWE-1 members' subtrees
      {311, 693}, {326, 693}, {327, 693}, {330, 693}, {345, 693}, {602, 693}, {653, 693},
      {654, 693}, {655, 693}, {1039, 693}, {312, 311}, {319, 311}, {328, 327}, {916, 327},
      {780, 327}, {331, 330}, {335, 330}, {338, 330}, {346, 345}, {347, 345}, {352, 345},
      {436, 435}, {437, 436}, {444, 436}, {1023, 697}, {1024, 697}, {1025, 697},
      {1077, 697}, {184, 1023}, {187, 1023}, {478, 1023}, {228, 703}, {754, 703},
      {755, 703}, {391, 703}, {392, 703}, {393, 703}, {397, 703}, {252, 754}, {253, 754},
      {273, 754}, {354, 754}, {394, 754}, {476, 754}, {1247, 754}, {390, 755}, {396, 755},
      {460, 755}, {544, 755}, {636, 755},
      // CWE-284 subtree
      {269, 284}, {282, 284}, {285, 284}, {286, 284}, {287, 284}, {923, 284}, {1191, 284},
      {1220, 284}, {290, 287}, {294, 287}, {295, 287}, {306, 287}, {307, 287}, {521, 287},
      {522, 287}, {620, 287}, {640, 287}, {798, 287}, {732, 285}, {862, 285}, {863, 285},
      {1230, 285}, {425, 862}, {638, 862}, {639, 863}, {647, 863}, {250, 269}, {266, 269},
      {267, 269}, {268, 269}, {270, 269}, {271, 269}, {274, 269},
  };
  return edges;
}

const std::unordered_map<int, int>& member_labels() {
  static const std::unordered_map<int, int> labels = [] {
    std::unordered_map<int, int> m;
    for (const auto& row : category_table()) {
      for (int id : row.members) m.emplace(id, row.label);
    }
    // Merged category names resolve to their own labels.
    m.emplace(1, 6);
    m.emplace(2, 12);
    return m;
  }();
  return labels;
}

}  // namespace

const CweTree& CweTree::bundled() {
  static const CweTree tree(bundled_edges());
  return tree;
}

std::optional<int> CweTree::parent(int id) const {
  auto it = parent_of_.find(id);
  if (it == parent_of_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> parse_cwe_number(std::string_view raw) {
  while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
  while (!raw.empty() && std::isspace(static_cast<unsigned char>(raw.back()))) raw.remove_suffix(1);
  if (raw.size() > 4 && (raw[0] == 'C' || raw[0] == 'c') && (raw[1] == 'W' || raw[1] == 'w') &&
      (raw[2] == 'E' || raw[2] == 'e') && raw[3] == '-') {
    raw.remove_prefix(4);
  }
  if (raw.empty() || raw.size() > 6) return std::nullopt;
  int v = 0;
  for (char c : raw) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

int merge_cwe(std::string_view raw_cwe_id, const CweTree& tree) {
  const auto id = parse_cwe_number(raw_cwe_id);
  if (!id) return kUndeterminedLabel;
  const auto& labels = member_labels();
  std::unordered_set<int> seen;
  for (std::optional<int> cur = id; cur; cur = tree.parent(*cur)) {
    if (!seen.insert(*cur).second) break;  // cycle in a user-supplied tree
    if (auto it = labels.find(*cur); it != labels.end()) return it->second;
  }
  return kUndeterminedLabel;
}

const std::string& category_name(int label) {
  const auto& rows = category_table();
  if (label < 1 || label > static_cast<int>(rows.size())) {
    throw LabelError("CWE label " + std::to_string(label) + " outside 1..12");
  }
  return rows[static_cast<std::size_t>(label - 1)].category;
}

}  // namespace patchfuse::cwe
