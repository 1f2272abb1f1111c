#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pixelcritic/image.hpp"

namespace pixelcritic {

// per-image quality score: mean over pixels of the predicted error
// probability, in [0,1]; higher = worse
struct PDScore {
  std::string id;
  std::string cls;  // empty = none
  double value = 0.0;
};

double pd_score(const ErrorMap& errmap);

// weighted mean over a region: sum(w*P) / sum(w)
double region_pd(const ErrorMap& errmap, const MaskMap& region);

// per-class mean PD of a generated set minus the same class's real mean
std::map<std::string, double> class_offset_pd(const std::map<std::string, double>& generated,
                                              const std::map<std::string, double>& real);

// Sorted descending by PD (ties broken by id), then cut into k equal
// splits: split 0 holds the worst scores. With per_class, samples are
// sorted within each class and rank-r members across classes land in the
// same split.
struct SplitSkeleton {
  int k = 0;
  bool per_class = false;
  std::vector<std::vector<PDScore>> splits;
  std::vector<double> mean_pd;  // non-increasing by construction
};

SplitSkeleton rank_and_split(std::vector<PDScore> scores, int k, bool per_class);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // symmetrized, unbiased (n-1)
  int count = 0;
};

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features);

// Squared Fréchet distance between Gaussians:
//   |mu_a - mu_b|^2 + Tr(Sa + Sb - 2*(Sa^1/2 Sb Sa^1/2)^1/2)
// computed via symmetric eigendecompositions; eigenvalues above -1e-8 are
// clamped to zero, anything more negative is a numerical breakdown.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct SplitEntry {
  int index = 0;  // 1-based, 1 = worst
  double mean_pd = 0.0;
  double frechet = 0.0;
};

struct SplitReport {
  std::vector<SplitEntry> splits;
  double random_baseline = 0.0;  // same-size uniform subset, seeded
  std::vector<std::vector<std::string>> members;
};

// Fréchet distance of every split against one fixed reference, plus a
// random same-size baseline drawn from the union of all splits.
SplitReport evaluate_splits(
    const SplitSkeleton& skeleton,
    const std::function<std::vector<double>(const std::string& id)>& features_for_id,
    const GaussianStats& reference, std::uint64_t baseline_seed);

// rank correlation with average ranks over ties
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// score table CSV: header "id,class,pd"
void save_scores_csv(const std::vector<PDScore>& scores, const std::filesystem::path& path);
std::vector<PDScore> load_scores_csv(const std::filesystem::path& path);

}  // namespace pixelcritic
