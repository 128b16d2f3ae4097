// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ifal/data/image.hpp"
#include "ifal/layout/layout.hpp"

namespace ifal::eval {

struct Detection {
  layout::BBox bbox;
  double score = 0.0;
  std::string label;
};

struct GroundTruth {
  layout::BBox bbox;
  std::string description;
};

// Closed-form rectangle IoU.
double iou(const layout::BBox& a, const layout::BBox& b);

struct InstanceMatch {
  std::optional<std::size_t> detection;  // index into the detection list
  double iou = 0.0;                      // best IoU with any detection, matched or not
  std::optional<bool> verdict;           // verifier result on the matched crop
};

struct MatchResult {
  std::vector<InstanceMatch> per_gt;
  std::size_t matched() const;
};

// Detections in descending score (ties: lower index first) each claim their
// highest-IoU unclaimed GT (ties: lower GT index) when that IoU >= threshold.
MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                             double threshold = 0.5);

enum class Verdict { kTrue, kFalse, kError };

// (image, bbox, description) -> verdict. Implementations must not throw.
using Verifier = std::function<Verdict(const data::Image&, const layout::BBox&, const std::string&)>;

Verifier synthetic_verifier();
Verifier always_true_verifier();
Verifier always_false_verifier();

struct EvalSample {
  data::Image image;
  std::vector<GroundTruth> gts;
  std::vector<Detection> detections;
};

struct InstanceRecord {
  std::size_t sample = 0;
  std::size_t instance = 0;
  std::string description;
  layout::BBox gt;
  std::optional<layout::BBox> detection;
  double iou = 0.0;
  bool localized = false;
  std::string verdict;  // "true", "false", "error" or "unmatched"
  bool success = false;
};

struct IfsResult {
  double rate = 0.0;
  std::size_t successes = 0;
  std::size_t total = 0;
  std::vector<InstanceRecord> records;
};

// Matched at IoU >= threshold and verified on the matched detection's crop.
IfsResult ifs_rate(std::span<const EvalSample> samples, const Verifier& verifier, double threshold = 0.5);

// All-point interpolated area under the precision-recall curve, detections
// pooled over samples. Throws ValidationError when there is no ground truth.
double average_precision(std::span<const EvalSample> samples, double threshold = 0.5);
double average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts, double threshold = 0.5);

// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)); eigenvalues below -1e-8 are
// rejected with NumericError, smaller negatives are clipped to zero.
double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Rows are samples; unbiased covariance (needs at least two rows).
FeatureStats feature_stats(const Eigen::MatrixXd& features);

struct MetricsReport {
  double ifs_rate = 0.0;
  double ap50 = 0.0;
  double frechet = 0.0;
  std::size_t n = 0;  // ground-truth instances
  std::vector<InstanceRecord> per_instance;
};

nlohmann::json report_to_json(const MetricsReport& report);

}  // namespace ifal::eval
