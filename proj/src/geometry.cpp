#include "pixprop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pixprop/errors.hpp"

namespace pixprop {

bool NormalizedBox::is_valid() const {
  return 0.0 <= x_min && x_min <= x_max && x_max <= 1.0 && 0.0 <= y_min && y_min <= y_max &&
         y_max <= 1.0;
}

namespace {

std::pair<double, double> clip_axis(double lo, double hi) {
  lo = std::clamp(lo, 0.0, 1.0);
  hi = std::clamp(hi, 0.0, 1.0);
  if (lo > hi) {
    const double mid = 0.5 * (lo + hi);
    return {mid, mid};
  }
  return {lo, hi};
}

}  // namespace

NormalizedBox clip(const std::array<double, 4>& raw) {
  for (double v : raw) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite box coordinate (corrupted prediction)");
  }
  const auto [x0, x1] = clip_axis(raw[0], raw[2]);
  const auto [y0, y1] = clip_axis(raw[1], raw[3]);
  return {x0, y0, x1, y1};
}

double iou(const NormalizedBox& a, const NormalizedBox& b) {
  const double area_a = a.area();
  const double area_b = b.area();
  if (!(area_a > 0.0) || !(area_b > 0.0)) return 0.0;
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return std::min(1.0, inter / (area_a + area_b - inter));
}

bool ranks_before(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.provenance.scale != b.provenance.scale) return a.provenance.scale < b.provenance.scale;
  if (a.provenance.variant != b.provenance.variant)
    return a.provenance.variant < b.provenance.variant;
  return a.provenance.cell < b.provenance.cell;
}

void sort_by_rank(std::vector<Proposal>& proposals) {
  std::stable_sort(proposals.begin(), proposals.end(), ranks_before);
}

std::vector<Proposal> nms(std::span<const Proposal> proposals, double overlap_threshold) {
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0))
    throw std::invalid_argument("nms overlap threshold must lie in (0, 1]");
  std::vector<Proposal> ranked(proposals.begin(), proposals.end());
  sort_by_rank(ranked);

  std::vector<char> suppressed(ranked.size(), 0);
  std::vector<Proposal> kept;
  for (size_t i = 0; i < ranked.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(ranked[i]);
    const NormalizedBox& anchor = ranked[i].box;
    if (!(anchor.area() > 0.0)) continue;
    for (size_t j = i + 1; j < ranked.size(); ++j) {
      if (!suppressed[j] && iou(anchor, ranked[j].box) > overlap_threshold) suppressed[j] = 1;
    }
  }
  return kept;
}

std::string format_proposal_row(const std::string& image_id, const Proposal& p) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f", p.box.x_min, p.box.y_min,
                p.box.x_max, p.box.y_max, p.score);
  return image_id + "," + buf;
}

void write_proposal_rows(std::ostream& out, const std::string& image_id,
                         std::span<const Proposal> ranked) {
  for (const Proposal& p : ranked) out << format_proposal_row(image_id, p) << '\n';
}

std::vector<ProposalRow> read_proposal_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kProposalCsvHeader)
    throw DataError("proposal CSV: missing or unexpected header");
  std::vector<ProposalRow> rows;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ProposalRow row;
    std::string field;
    std::array<double, 5> v{};
    if (!std::getline(ss, row.image_id, ',')) throw DataError("proposal CSV: bad row " + std::to_string(line_no));
    for (double& x : v) {
      if (!std::getline(ss, field, ',')) throw DataError("proposal CSV: short row " + std::to_string(line_no));
      try {
        x = std::stod(field);
      } catch (const std::exception&) {
        throw DataError("proposal CSV: bad number on row " + std::to_string(line_no));
      }
    }
    row.box = {v[0], v[1], v[2], v[3]};
    row.score = v[4];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace pixprop
