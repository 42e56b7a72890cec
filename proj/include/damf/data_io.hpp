#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "damf/rng.hpp"
#include "damf/trainers.hpp"
#include "damf/types.hpp"

namespace damf {

namespace detail {

// %.17g round-trips IEEE doubles exactly through decimal text.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

}  // namespace detail

// Triple files: whitespace-separated `user item rating` lines, 1-indexed,
// blank lines ignored. Dimensions default to the maximum index seen; pass
// num_users/num_items to override (e.g. test sets naming unseen indices).
inline InteractionSet load_triples(const std::string& path, int num_users = 0,
                                   int num_items = 0, RatingScale scale = RatingScale()) {
  std::ifstream in = detail::open_in(path);
  std::vector<Triple> triples;
  std::string line;
  int line_no = 0;
  int max_user = 0, max_item = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    long long user = 0, item = 0;
    double rating = 0.0;
    if (!(fields >> user)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank
      throw std::runtime_error(path + ": parse error at line " + std::to_string(line_no));
    }
    if (!(fields >> item >> rating))
      throw std::runtime_error(path + ": parse error at line " + std::to_string(line_no));
    std::string trailing;
    if (fields >> trailing)
      throw std::runtime_error(path + ": parse error at line " + std::to_string(line_no) +
                               " (trailing fields)");
    if (user < 1 || item < 1)
      throw std::runtime_error(path + ": indices must be 1-based at line " +
                               std::to_string(line_no));
    if (!scale.contains(rating))
      throw std::runtime_error(path + ": rating out of range at line " +
                               std::to_string(line_no));
    triples.push_back(Triple{static_cast<int>(user - 1), static_cast<int>(item - 1), rating});
    max_user = std::max(max_user, static_cast<int>(user));
    max_item = std::max(max_item, static_cast<int>(item));
  }
  if (triples.empty()) throw std::runtime_error(path + ": no ratings found");
  const int m = num_users > 0 ? num_users : max_user;
  const int n = num_items > 0 ? num_items : max_item;
  try {
    return InteractionSet(m, n, std::move(triples), scale);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

inline void save_triples(const InteractionSet& data, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  for (const Triple& t : data.triples())
    out << (t.user + 1) << ' ' << (t.item + 1) << ' ' << detail::format_double(t.rating)
        << '\n';
}

// Uniform random partition without replacement; validation gets
// floor(fraction * M) triples. Disjoint, exhaustive, order-preserving.
inline std::pair<InteractionSet, InteractionSet> split_train_val(const InteractionSet& data,
                                                                 double fraction,
                                                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_train_val: fraction must lie in (0, 1)");
  const std::size_t m_total = data.size();
  const std::size_t val_size = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(m_total)));
  if (val_size == 0 || val_size == m_total)
    throw std::invalid_argument("split_train_val: degenerate split for this fraction");

  std::vector<std::size_t> order(m_total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, rng_stream::kSplit);
  for (std::size_t i = m_total - 1; i > 0; --i)
    std::swap(order[i], order[rng.index(i + 1)]);

  std::vector<bool> in_val(m_total, false);
  for (std::size_t i = 0; i < val_size; ++i) in_val[order[i]] = true;
  std::vector<Triple> train, val;
  train.reserve(m_total - val_size);
  val.reserve(val_size);
  for (std::size_t i = 0; i < m_total; ++i)
    (in_val[i] ? val : train).push_back(data.triples()[i]);
  return {InteractionSet(data.num_users(), data.num_items(), std::move(train), data.scale()),
          InteractionSet(data.num_users(), data.num_items(), std::move(val), data.scale())};
}

struct DatasetStats {
  int num_users = 0;
  int num_items = 0;
  std::size_t num_ratings = 0;  // train + test
  double sparsity = 0.0;
  double mean_rating_train = 0.0;
  double mean_rating_test = 0.0;
  double kl_divergence = 0.0;  // KL(train || test) over rating levels
};

namespace detail {

inline std::vector<double> level_histogram(const InteractionSet& data) {
  const int lo = static_cast<int>(std::lround(data.scale().r_min));
  const int hi = static_cast<int>(std::lround(data.scale().r_max));
  std::vector<double> hist(std::max(hi - lo + 1, 1), 1.0);  // Laplace +1
  for (const Triple& t : data.triples()) {
    const int level = std::clamp(static_cast<int>(std::lround(t.rating)) - lo, 0,
                                 static_cast<int>(hist.size()) - 1);
    hist[level] += 1.0;
  }
  const double total = std::accumulate(hist.begin(), hist.end(), 0.0);
  for (double& h : hist) h /= total;
  return hist;
}

inline double mean_rating(const InteractionSet& data) {
  double sum = 0.0;
  for (const Triple& t : data.triples()) sum += t.rating;
  return sum / static_cast<double>(data.size());
}

}  // namespace detail

inline DatasetStats dataset_stats(const InteractionSet& train, const InteractionSet& test) {
  DatasetStats stats;
  stats.num_users = std::max(train.num_users(), test.num_users());
  stats.num_items = std::max(train.num_items(), test.num_items());
  stats.num_ratings = train.size() + test.size();
  stats.sparsity = static_cast<double>(stats.num_ratings) /
                   (static_cast<double>(stats.num_users) * stats.num_items);
  stats.mean_rating_train = detail::mean_rating(train);
  stats.mean_rating_test = detail::mean_rating(test);
  const std::vector<double> p = detail::level_histogram(train);
  const std::vector<double> q = detail::level_histogram(test);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  stats.kl_divergence = std::max(kl, 0.0);
  return stats;
}

// Dense matrix files: one row per line, space-separated, full precision.
inline void save_dense_matrix(const Matrix& matrix, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c) out << ' ';
      out << detail::format_double(matrix(r, c));
    }
    out << '\n';
  }
}

inline Matrix load_dense_matrix(const std::string& path) {
  std::ifstream in = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<double> row;
    double value;
    while (fields >> value) row.push_back(value);
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(path + ": ragged row at line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": empty matrix");
  Matrix out(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

inline void save_propensity(const PropensityMap& propensity, int m, int n,
                            const std::string& path) {
  save_dense_matrix(propensity.materialize(m, n), path);
}

inline PropensityMap load_propensity(const std::string& path, bool allow_zero = false) {
  return PropensityMap::dense(load_dense_matrix(path), allow_zero);
}

// Model files: header `m n d`, then the m user-factor rows, then the n
// item-factor rows.
inline void save_model(const FactorModel& model, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << model.num_users() << ' ' << model.num_items() << ' ' << model.dim() << '\n';
  auto write_rows = [&](const Matrix& factors) {
    for (Eigen::Index r = 0; r < factors.rows(); ++r) {
      for (Eigen::Index c = 0; c < factors.cols(); ++c) {
        if (c) out << ' ';
        out << detail::format_double(factors(r, c));
      }
      out << '\n';
    }
  };
  write_rows(model.user_factors());
  write_rows(model.item_factors());
}

inline FactorModel load_model(const std::string& path) {
  std::ifstream in = detail::open_in(path);
  int m = 0, n = 0, d = 0;
  if (!(in >> m >> n >> d) || m < 1 || n < 1 || d < 1)
    throw std::runtime_error(path + ": bad model header");
  Matrix user(m, d), item(n, d);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < d; ++c)
      if (!(in >> user(r, c))) throw std::runtime_error(path + ": truncated user factors");
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c)
      if (!(in >> item(r, c))) throw std::runtime_error(path + ": truncated item factors");
  return FactorModel(std::move(user), std::move(item));
}

// Bound-trace CSV: one row per logged step, one column per component; the
// ideal column is empty when true ratings were not supplied.
inline void save_trace(const TrainTrace& trace, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << "iteration,naive,pmd,complexity,confidence,bound,ideal\n";
  for (const TraceRecord& rec : trace.records) {
    out << rec.iteration << ',' << detail::format_double(rec.naive) << ','
        << detail::format_double(rec.pmd) << ',' << detail::format_double(rec.complexity)
        << ',' << detail::format_double(rec.confidence) << ','
        << detail::format_double(rec.bound) << ',';
    if (rec.ideal) out << detail::format_double(*rec.ideal);
    out << '\n';
  }
}

}  // namespace damf
