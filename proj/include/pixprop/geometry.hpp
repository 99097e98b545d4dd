#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pixprop {

// Box in fractional image coordinates: x in units of image width, y in units
// of image height. Valid boxes satisfy 0 <= min <= max <= 1 on both axes.
struct NormalizedBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool is_valid() const;

  friend bool operator==(const NormalizedBox&, const NormalizedBox&) = default;
};

// Clamps to [0,1]; an inverted axis collapses to the midpoint of its two
// values. Throws std::domain_error on non-finite input.
NormalizedBox clip(const std::array<double, 4>& raw);

// Intersection over union. Zero-area boxes overlap nothing, not even
// themselves.
double iou(const NormalizedBox& a, const NormalizedBox& b);

enum class ScaleTag : std::uint8_t { kOriginal = 0, kEnlarged = 1 };
enum class VariantTag : std::uint8_t { kInitial = 0, kShrunk = 1, kExpanded = 2 };

struct Provenance {
  ScaleTag scale = ScaleTag::kOriginal;
  VariantTag variant = VariantTag::kInitial;
  std::int32_t cell = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Proposal {
  NormalizedBox box;
  double score = 0.0;
  Provenance provenance;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

// Rank order: higher score first; ties go to original scale, then
// initial < shrunk < expanded, then lower cell index.
bool ranks_before(const Proposal& a, const Proposal& b);
void sort_by_rank(std::vector<Proposal>& proposals);

// Greedy suppression in rank order. A candidate is dropped when its IoU with
// an already kept proposal is strictly greater than overlap_threshold.
std::vector<Proposal> nms(std::span<const Proposal> proposals, double overlap_threshold);

// Proposal CSV: "image_id,x_min,y_min,x_max,y_max,score" with six decimals.
inline constexpr const char* kProposalCsvHeader = "image_id,x_min,y_min,x_max,y_max,score";
std::string format_proposal_row(const std::string& image_id, const Proposal& p);
void write_proposal_rows(std::ostream& out, const std::string& image_id,
                         std::span<const Proposal> ranked);

struct ProposalRow {
  std::string image_id;
  NormalizedBox box;
  double score = 0.0;
};
// Parses a proposal CSV (header required). Throws DataError on malformed rows.
std::vector<ProposalRow> read_proposal_csv(std::istream& in);

}  // namespace pixprop
