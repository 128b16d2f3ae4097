// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/eval/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ifal/data/synthetic.hpp"
#include "ifal/errors.hpp"

namespace ifal::eval {

double iou(const layout::BBox& a, const layout::BBox& b) {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::size_t MatchResult::matched() const {
  return static_cast<std::size_t>(
      std::count_if(per_gt.begin(), per_gt.end(), [](const InstanceMatch& m) { return m.detection.has_value(); }));
}

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

// Per detection: the GT it claimed, if any.
std::vector<std::optional<std::size_t>> greedy_claims(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                                      double threshold) {
  std::vector<std::optional<std::size_t>> claims(dets.size());
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d : score_order(dets)) {
    if (!std::isfinite(dets[d].score)) throw ValidationError("detection scores must be finite");
    double best = -1.0;
    std::optional<std::size_t> pick;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(dets[d].bbox, gts[g].bbox);
      if (v > best) {
        best = v;
        pick = g;
      }
    }
    if (pick && best >= threshold) {
      taken[*pick] = true;
      claims[d] = pick;
    }
  }
  return claims;
}

}  // namespace

MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts, double threshold) {
  MatchResult out;
  out.per_gt.resize(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    for (const auto& d : dets) out.per_gt[g].iou = std::max(out.per_gt[g].iou, iou(d.bbox, gts[g].bbox));
  }
  const auto claims = greedy_claims(dets, gts, threshold);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (!claims[d]) continue;
    auto& m = out.per_gt[*claims[d]];
    m.detection = d;
    m.iou = iou(dets[d].bbox, gts[*claims[d]].bbox);
  }
  return out;
}

Verifier synthetic_verifier() {
  return [](const data::Image& image, const layout::BBox& bbox, const std::string& description) {
    try {
      return data::verify(image, bbox, description) ? Verdict::kTrue : Verdict::kFalse;
    } catch (const std::exception&) {
      return Verdict::kError;
    }
  };
}

Verifier always_true_verifier() {
  return [](const data::Image&, const layout::BBox&, const std::string&) { return Verdict::kTrue; };
}

Verifier always_false_verifier() {
  return [](const data::Image&, const layout::BBox&, const std::string&) { return Verdict::kFalse; };
}

IfsResult ifs_rate(std::span<const EvalSample> samples, const Verifier& verifier, double threshold) {
  IfsResult out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const EvalSample& sample = samples[s];
    const MatchResult match = match_detections(sample.detections, sample.gts, threshold);
    for (std::size_t g = 0; g < sample.gts.size(); ++g) {
      InstanceRecord rec;
      rec.sample = s;
      rec.instance = g;
      rec.description = sample.gts[g].description;
      rec.gt = sample.gts[g].bbox;
      rec.iou = match.per_gt[g].iou;
      rec.verdict = "unmatched";
      if (match.per_gt[g].detection) {
        const layout::BBox& box = sample.detections[*match.per_gt[g].detection].bbox;
        rec.detection = box;
        rec.localized = true;
        const Verdict v = verifier(sample.image, box, rec.description);
        rec.verdict = v == Verdict::kTrue ? "true" : v == Verdict::kFalse ? "false" : "error";
        rec.success = v == Verdict::kTrue;
      }
      out.successes += rec.success;
      out.records.push_back(std::move(rec));
    }
  }
  out.total = out.records.size();
  out.rate = out.total ? static_cast<double>(out.successes) / static_cast<double>(out.total) : 0.0;
  return out;
}

namespace {

double ap_from_flags(std::vector<std::pair<double, bool>> scored, std::size_t n_gt) {
  if (n_gt == 0) throw ValidationError("average precision is undefined without ground truth");
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    tp += scored[i].second;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  // Precision envelope from the right, then sum over recall increments.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

double average_precision(std::span<const EvalSample> samples, double threshold) {
  std::vector<std::pair<double, bool>> scored;
  std::size_t n_gt = 0;
  for (const auto& s : samples) {
    const auto claims = greedy_claims(s.detections, s.gts, threshold);
    for (std::size_t d = 0; d < s.detections.size(); ++d) scored.emplace_back(s.detections[d].score, claims[d].has_value());
    n_gt += s.gts.size();
  }
  return ap_from_flags(std::move(scored), n_gt);
}

double average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts, double threshold) {
  EvalSample s;
  s.detections.assign(dets.begin(), dets.end());
  s.gts.assign(gts.begin(), gts.end());
  return average_precision(std::span<const EvalSample>(&s, 1), threshold);
}

namespace {

constexpr double kEigenTolerance = -1e-8;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < kEigenTolerance) throw NumericError(std::string(what) + " is not positive semidefinite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void check_cov(const Eigen::MatrixXd& c, Eigen::Index n, const char* what) {
  if (c.rows() != n || c.cols() != n) throw DimensionError(std::string(what) + " has the wrong shape");
  if (!c.allFinite()) throw NumericError(std::string(what) + " has non-finite entries");
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, c.cwiseAbs().maxCoeff())) {
    throw NumericError(std::string(what) + " is not symmetric");
  }
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2) {
  const Eigen::Index n = mu1.size();
  if (mu2.size() != n) throw DimensionError("frechet_distance: mean sizes differ");
  check_cov(cov1, n, "first covariance");
  check_cov(cov2, n, "second covariance");
  // tr((S1 S2)^(1/2)) = tr((S1^(1/2) S2 S1^(1/2))^(1/2)), which is symmetric.
  const Eigen::MatrixXd s1h = psd_sqrt(cov1, "first covariance");
  psd_sqrt(cov2, "second covariance");
  Eigen::MatrixXd inner = s1h * cov2 * s1h;
  inner = 0.5 * (inner + inner.transpose());
  const double tr_cross = psd_sqrt(inner, "covariance product").trace();
  const double d = (mu1 - mu2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * tr_cross;
  return std::max(d, 0.0);
}

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw ValidationError("feature statistics need at least two samples");
  FeatureStats s;
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centred = features.rowwise() - s.mean.transpose();
  s.cov = centred.transpose() * centred / static_cast<double>(features.rows() - 1);
  return s;
}

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : report.per_instance) {
    nlohmann::json j = {{"sample", r.sample},         {"instance", r.instance},
                        {"description", r.description}, {"gt", {r.gt.x, r.gt.y, r.gt.w, r.gt.h}},
                        {"iou", r.iou},               {"localized", r.localized},
                        {"verdict", r.verdict},       {"success", r.success}};
    j["detection"] = r.detection ? nlohmann::json{r.detection->x, r.detection->y, r.detection->w, r.detection->h}
                                 : nlohmann::json(nullptr);
    per.push_back(std::move(j));
  }
  return {{"ifs_rate", report.ifs_rate}, {"ap50", report.ap50}, {"frechet", report.frechet},
          {"n", report.n},               {"per_instance", per}};
}

}  // namespace ifal::eval
