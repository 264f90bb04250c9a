#pragma once

#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vhdr/nets/network.hpp"

namespace vhdr {

/// One row of an architecture table exactly as printed: L, Type, K, S, Ch, D.
struct TableRow {
  int index;
  std::string_view type;
  std::string_view kernel;
  std::string_view stride;
  std::string_view channels;
  std::string_view dilation;
};

// clang-format off
inline const std::vector<TableRow> kTableC3D = {
    {1, "conv.", "3", "1", "64", "-"}, {2, "conv.", "3", "1", "64", "-"}, {3, "conv.", "3", "1", "64", "-"},
    {4, "conv.", "3", "1", "64", "-"}, {5, "conv.", "3", "1", "64", "-"}, {6, "conv.", "3", "1", "64", "-"},
    {7, "conv.", "3", "1", "64", "-"}, {8, "conv",  "3", "1", "64", "-"}, {9, "conv.", "3", "1", "64", "-"},
    {10, "conv.", "3", "1", "3", "-"},
};

inline const std::vector<TableRow> kTableDC3D = {
    {1, "conv.", "3", "1", "64", "-"}, {2, "dilated conv.", "3", "1", "64", "2"}, {3, "conv.", "3", "1", "64", "-"},
    {4, "dilated conv.", "3", "1", "64", "2"}, {5, "conv.", "3", "1", "64", "-"}, {6, "conv.", "3", "1", "64", "-"},
    {7, "dilated conv.", "3", "1", "64", "2"}, {8, "conv", "3", "1", "64", "-"},
    {9, "dilated conv.", "3", "1", "64", "2"}, {10, "conv.", "3", "1", "3", "-"},
};

inline const std::vector<TableRow> kTableC3DED = {
    {1, "conv.", "5", "1", "16", "-"},
    {2, "conv.", "5", "1", "16", "-"},
    {3, "conv.$\\downarrow$", "3", "(1,2,2)", "32", "-"},
    {4, "conv.", "3", "1", "64", "-"},
    {5, "conv.$\\downarrow$", "3", "(1,2,2)", "128", "-"},
    {6, "conv.", "3", "1", "128", "-"},
    {7, "dilated conv.", "3", "(1,2,2)", "128", "2"},
    {8, "dilated conv.", "3", "(1,2,2)", "128", "2"},
    {9, "dilated conv.", "3", "(1,2,2)", "128", "2"},
    {10, "conv.", "3", "1", "128", "-"},
    {11, "conv.", "3", "1", "64", "-"},
    {12, "deconv.$\\uparrow$", "5", "(1,2,2)", "32", "-"},
    {13, "conv.", "3", "1", "64", "-"},
    {14, "conv.", "3", "1", "32", "-"},
    {15, "deconv.$\\uparrow$", "3", "(1,2,2)", "16", "-"},
    {16, "conv.", "3", "1", "32", "-"},
    {17, "conv.", "3", "1", "16", "-"},
    {18, "conv.", "3", "1", "3", "-"},
};
// clang-format on

inline const std::vector<TableRow>& architecture_table(Architecture a) {
  switch (a) {
    case Architecture::C3D: return kTableC3D;
    case Architecture::DC3D: return kTableDC3D;
    case Architecture::C3DED: return kTableC3DED;
  }
  throw UsageError("unknown architecture");
}

/// Decoded layer geometry against which a built layer is compared.
struct ExpectedLayer {
  int index = 0;
  LayerKind kind = LayerKind::Conv;
  Triple kernel{}, stride{}, dilation{};
  int channels = 0;
  bool relu = true;

  friend bool operator==(const ExpectedLayer&, const ExpectedLayer&) = default;
};

namespace detail {

inline Triple parse_table_triple(std::string_view s) {
  if (s == "-" ) return {1, 1, 1};
  if (!s.empty() && s.front() == '(') {
    Triple t{};
    std::istringstream is{std::string(s.substr(1, s.size() - 2))};
    char comma = 0;
    is >> t[0] >> comma >> t[1] >> comma >> t[2];
    return t;
  }
  const int v = std::stoi(std::string(s));
  return {v, v, v};
}

}  // namespace detail

/// Reads a printed table row into layer geometry.
///
/// Dilation is applied only within frames, so a printed dilation of 2 means
/// (1,2,2). On dilated rows the printed stride "(1,2,2)" is read as the
/// in-frame extent of that dilation, with unit stride: three stacked strided
/// layers could not be undone by the two upsamplers.
inline ExpectedLayer interpret_row(const TableRow& row, bool last) {
  ExpectedLayer e;
  e.index = row.index;
  e.kernel = detail::parse_table_triple(row.kernel);
  e.channels = std::stoi(std::string(row.channels));
  e.relu = !last;
  const bool dilated = row.dilation != "-";
  e.dilation = dilated ? Triple{1, std::stoi(std::string(row.dilation)), std::stoi(std::string(row.dilation))}
                       : Triple{1, 1, 1};
  e.stride = dilated ? Triple{1, 1, 1} : detail::parse_table_triple(row.stride);
  if (row.type.starts_with("deconv")) {
    e.kind = LayerKind::DeconvUp;
  } else if (row.type.starts_with("dilated")) {
    e.kind = LayerKind::DilatedConv;
  } else if (row.type.find("downarrow") != std::string_view::npos) {
    e.kind = LayerKind::ConvDown;
  } else {
    e.kind = LayerKind::Conv;
  }
  return e;
}

inline ExpectedLayer describe_layer(const LayerSpec& l) {
  return ExpectedLayer{l.index, l.kind, l.conv.kernel, l.conv.stride, l.conv.dilation, l.conv.out_channels, l.relu};
}

/// Skip wiring: layer index -> concatenated source layers.
inline std::map<int, std::vector<int>> expected_skips(Architecture a) {
  if (a == Architecture::C3DED) return {{13, {3}}, {16, {2}}};
  return {};
}

struct AuditReport {
  Architecture architecture = Architecture::C3D;
  std::size_t expected_layers = 0;
  std::size_t actual_layers = 0;
  std::vector<std::string> mismatches;  // one entry per offending row or property
  bool frames_preserved = true;
  std::int64_t parameter_count = 0;

  bool ok() const { return mismatches.empty() && expected_layers == actual_layers && frames_preserved; }
};

inline std::string describe(const ExpectedLayer& e) {
  std::ostringstream os;
  os << "L" << e.index << " " << to_string(e.kind) << " K=" << triple_str(e.kernel) << " S=" << triple_str(e.stride)
     << " Ch=" << e.channels << " D=" << triple_str(e.dilation) << (e.relu ? " relu" : " linear");
  return os.str();
}

/// Compares a built network against the embedded architecture table.
inline AuditReport audit(const Network& net) {
  AuditReport r;
  r.architecture = net.architecture();
  const auto& table = architecture_table(net.architecture());
  r.expected_layers = table.size();
  r.actual_layers = net.layers().size();
  r.parameter_count = net.parameters().element_count();
  if (r.expected_layers != r.actual_layers) {
    r.mismatches.push_back("layer count " + std::to_string(r.actual_layers) + ", table lists " +
                           std::to_string(r.expected_layers));
  }
  const auto skips = expected_skips(net.architecture());
  for (std::size_t i = 0; i < std::min(table.size(), net.layers().size()); ++i) {
    const ExpectedLayer want = interpret_row(table[i], i + 1 == table.size());
    const ExpectedLayer got = describe_layer(net.layers()[i]);
    if (!(want == got)) r.mismatches.push_back("row " + std::to_string(want.index) + ": expected " + describe(want) +
                                               ", built " + describe(got));
    const auto it = skips.find(want.index);
    const std::vector<int> want_skip = it == skips.end() ? std::vector<int>{} : it->second;
    if (want_skip != net.layers()[i].concat_sources) {
      r.mismatches.push_back("row " + std::to_string(want.index) + ": skip wiring differs");
    }
  }
  try {
    const int factor = net.spatial_downsampling();
    for (const auto& s : net.layer_shapes({1, 3, 4, 4 * factor, 4 * factor})) {
      if (s[2] != 4) r.frames_preserved = false;
    }
  } catch (const DataError& e) {
    r.frames_preserved = false;
    r.mismatches.push_back(std::string("shape propagation failed: ") + e.what());
  }
  if (!r.frames_preserved) r.mismatches.push_back("frame extent not preserved through every layer");
  return r;
}

/// Human-readable audit: the layer dump followed by the verdict.
inline std::string format_audit(const Network& net, const AuditReport& r) {
  std::ostringstream os;
  os << net.dump();
  os << "# table rows: " << r.expected_layers << ", built layers: " << r.actual_layers
     << ", frames preserved: " << (r.frames_preserved ? "yes" : "no") << "\n";
  for (const auto& m : r.mismatches) os << "MISMATCH " << m << "\n";
  os << (r.ok() ? "# audit OK" : "# audit FAILED") << "\n";
  return os.str();
}

}  // namespace vhdr
