#include "pixelcritic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "pixelcritic/errors.hpp"
#include "pixelcritic/rng.hpp"

namespace pixelcritic {

namespace {

constexpr double kEigTolerance = 1e-8;

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success)
    throw NumericError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd evals = solver.eigenvalues();
  for (int i = 0; i < evals.size(); ++i) {
    if (evals[i] < -kEigTolerance)
      throw NumericError(std::string(what) + " has eigenvalue " + std::to_string(evals[i]) +
                         " below tolerance -1e-8; covariance is not PSD");
    evals[i] = evals[i] > 0.0 ? std::sqrt(evals[i]) : 0.0;
  }
  return solver.eigenvectors() * evals.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

double pd_score(const ErrorMap& errmap) {
  if (errmap.size() == 0) throw DataError("pd_score: empty error map");
  return errmap.mean();
}

double region_pd(const ErrorMap& errmap, const MaskMap& region) {
  if (region.height() != errmap.height() || region.width() != errmap.width())
    throw DataError("region_pd: region dims do not match error map");
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < errmap.size(); ++i) {
    weighted += region.data()[i] * errmap.data()[i];
    total += region.data()[i];
  }
  if (total <= 0.0) throw DataError("region_pd: region has no positive weight");
  return weighted / total;
}

std::map<std::string, double> class_offset_pd(const std::map<std::string, double>& generated,
                                              const std::map<std::string, double>& real) {
  std::set<std::string> missing;
  for (const auto& [cls, v] : generated)
    if (!real.count(cls)) missing.insert(cls + " (no real)");
  for (const auto& [cls, v] : real)
    if (!generated.count(cls)) missing.insert(cls + " (no generated)");
  if (!missing.empty()) {
    std::string msg = "class_offset_pd: class sets do not match:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  std::map<std::string, double> offsets;
  for (const auto& [cls, gen_mean] : generated) offsets[cls] = gen_mean - real.at(cls);
  return offsets;
}

SplitSkeleton rank_and_split(std::vector<PDScore> scores, int k, bool per_class) {
  if (k < 2) throw ConfigError("rank_and_split: k must be >= 2");
  if (scores.empty()) throw DataError("rank_and_split: no scores");
  const auto worst_first = [](const PDScore& a, const PDScore& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.id < b.id;  // deterministic tie-break
  };

  SplitSkeleton skeleton;
  skeleton.k = k;
  skeleton.per_class = per_class;
  skeleton.splits.resize(static_cast<std::size_t>(k));

  if (!per_class) {
    if (scores.size() % static_cast<std::size_t>(k) != 0) {
      const std::size_t nearest = (scores.size() / static_cast<std::size_t>(k)) *
                                  static_cast<std::size_t>(k);
      throw ConfigError("rank_and_split: count " + std::to_string(scores.size()) +
                        " not divisible by k=" + std::to_string(k) + "; nearest valid count is " +
                        std::to_string(nearest));
    }
    std::sort(scores.begin(), scores.end(), worst_first);
    const std::size_t per_split = scores.size() / static_cast<std::size_t>(k);
    for (std::size_t i = 0; i < scores.size(); ++i)
      skeleton.splits[i / per_split].push_back(scores[i]);
  } else {
    std::map<std::string, std::vector<PDScore>> by_class;
    for (auto& s : scores) by_class[s.cls].push_back(std::move(s));
    for (auto& [cls, group] : by_class) {
      if (group.size() % static_cast<std::size_t>(k) != 0) {
        const std::size_t nearest = (group.size() / static_cast<std::size_t>(k)) *
                                    static_cast<std::size_t>(k);
        throw ConfigError("rank_and_split: class '" + cls + "' count " +
                          std::to_string(group.size()) + " not divisible by k=" +
                          std::to_string(k) + "; nearest valid count is " +
                          std::to_string(nearest));
      }
      std::sort(group.begin(), group.end(), worst_first);
      const std::size_t per_split = group.size() / static_cast<std::size_t>(k);
      for (std::size_t i = 0; i < group.size(); ++i)
        skeleton.splits[i / per_split].push_back(group[i]);
    }
    for (auto& split : skeleton.splits) std::sort(split.begin(), split.end(), worst_first);
  }

  for (const auto& split : skeleton.splits) {
    double acc = 0.0;
    for (const auto& s : split) acc += s.value;
    skeleton.mean_pd.push_back(acc / static_cast<double>(split.size()));
  }
  return skeleton;
}

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2)
    throw DataError("gaussian_stats: need at least 2 feature vectors, got " +
                    std::to_string(features.size()));
  const std::size_t dim = features.front().size();
  for (const auto& f : features)
    if (f.size() != dim) throw DataError("gaussian_stats: inconsistent feature dimensions");

  GaussianStats stats;
  stats.count = static_cast<int>(features.size());
  stats.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const auto& f : features)
    stats.mean += Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(dim));
  stats.mean /= static_cast<double>(features.size());

  stats.cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (const auto& f : features) {
    const Eigen::VectorXd centered =
        Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(dim)) - stats.mean;
    stats.cov.noalias() += centered * centered.transpose();
  }
  stats.cov /= static_cast<double>(features.size() - 1);
  stats.cov = 0.5 * (stats.cov + stats.cov.transpose()).eval();
  return stats;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size())
    throw DataError("frechet_distance: dimension mismatch " + std::to_string(a.mean.size()) +
                    " vs " + std::to_string(b.mean.size()));
  const Eigen::MatrixXd sqrt_a = psd_sqrt(a.cov, "first covariance");
  Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
  inner = 0.5 * (inner + inner.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner);
  if (solver.info() != Eigen::Success)
    throw NumericError("eigendecomposition failed for covariance product");
  double trace_sqrt = 0.0;
  for (int i = 0; i < solver.eigenvalues().size(); ++i) {
    const double ev = solver.eigenvalues()[i];
    if (ev < -kEigTolerance)
      throw NumericError("covariance product eigenvalue " + std::to_string(ev) +
                         " below tolerance -1e-8; numerical breakdown");
    if (ev > 0.0) trace_sqrt += std::sqrt(ev);
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double d2 = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * trace_sqrt;
  return d2 > 0.0 ? d2 : 0.0;
}

SplitReport evaluate_splits(
    const SplitSkeleton& skeleton,
    const std::function<std::vector<double>(const std::string& id)>& features_for_id,
    const GaussianStats& reference, std::uint64_t baseline_seed) {
  SplitReport report;
  std::vector<std::string> all_ids;
  for (std::size_t s = 0; s < skeleton.splits.size(); ++s) {
    const auto& split = skeleton.splits[s];
    if (split.size() < 2)
      throw DataError("evaluate_splits: split " + std::to_string(s + 1) +
                      " has fewer than 2 members");
    std::vector<std::vector<double>> features;
    features.reserve(split.size());
    std::vector<std::string> ids;
    for (const auto& score : split) {
      features.push_back(features_for_id(score.id));
      ids.push_back(score.id);
      all_ids.push_back(score.id);
    }
    SplitEntry entry;
    entry.index = static_cast<int>(s + 1);
    entry.mean_pd = skeleton.mean_pd[s];
    entry.frechet = frechet_distance(gaussian_stats(features), reference);
    report.splits.push_back(entry);
    report.members.push_back(std::move(ids));
  }

  // random baseline: one split's worth of samples, uniform without replacement
  const std::size_t subset = skeleton.splits.front().size();
  Rng rng(baseline_seed);
  for (std::size_t i = all_ids.size() - 1; i > 0; --i)
    std::swap(all_ids[i],
              all_ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
  std::vector<std::vector<double>> baseline_features;
  baseline_features.reserve(subset);
  for (std::size_t i = 0; i < subset; ++i)
    baseline_features.push_back(features_for_id(all_ids[i]));
  report.random_baseline = frechet_distance(gaussian_stats(baseline_features), reference);
  return report;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ConfigError("spearman: need two equally sized series of length >= 2");
  const auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("spearman: zero rank variance");
  return sxy / std::sqrt(sxx * syy);
}

void save_scores_csv(const std::vector<PDScore>& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open score table for writing: " + path.string());
  out << "id,class,pd\n";
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), "%.9f", s.value);
    out << s.id << "," << s.cls << "," << buf << "\n";
  }
  if (!out) throw DataError("write failure on score table: " + path.string());
}

std::vector<PDScore> load_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open score table: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "id,class,pd")
    throw DataError("score table missing 'id,class,pd' header: " + path.string());
  std::vector<PDScore> scores;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw DataError("malformed score row '" + line + "' in " + path.string());
    PDScore s;
    s.id = line.substr(0, c1);
    s.cls = line.substr(c1 + 1, c2 - c1 - 1);
    try {
      s.value = std::stod(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw DataError("malformed pd value in '" + line + "' in " + path.string());
    }
    if (s.value < 0.0 || s.value > 1.0)
      throw DataError("pd value outside [0,1] in " + path.string());
    scores.push_back(std::move(s));
  }
  return scores;
}

}  // namespace pixelcritic
