#include "deskasr/lm/interpolate.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "deskasr/errors.hpp"

namespace deskasr::lm {

namespace {

void check_shared_vocab(const std::vector<const LmScorer*>& scorers) {
  if (scorers.empty()) throw ConfigError("interpolation: no scorers");
  for (std::size_t i = 1; i < scorers.size(); ++i) {
    if (!(scorers[i]->vocab() == scorers[0]->vocab())) {
      throw ConfigError("interpolation: scorers use different vocabularies");
    }
  }
}

}  // namespace

InterpolationResult tune_interpolation(const std::vector<const LmScorer*>& scorers,
                                       const std::vector<std::vector<std::string>>& heldout,
                                       std::size_t iterations) {
  if (scorers.size() < 2) {
    throw ConfigError("tune_interpolation needs at least two scorers");
  }
  check_shared_vocab(scorers);
  const Vocab& v = scorers[0]->vocab();
  const std::size_t M = scorers.size();

  // Event matrix: p_i(event) for every heldout position.
  std::vector<std::vector<double>> probs;  // event -> per-scorer probability
  for (const auto& sent : heldout) {
    std::vector<int> history{v.bos()};
    std::vector<int> steps(sent.size());
    for (std::size_t i = 0; i < sent.size(); ++i) steps[i] = v.id(sent[i]);
    steps.push_back(v.eos());
    for (int target : steps) {
      std::vector<double> row(M);
      for (std::size_t m = 0; m < M; ++m) {
        row[m] = std::exp(scorers[m]->log_prob(history, target));
      }
      double mx = 0.0;
      for (double p : row) mx = std::max(mx, p);
      if (mx <= 0.0) {
        throw DegenerateError(
            "interpolation: every scorer assigns zero probability to a heldout event");
      }
      probs.push_back(std::move(row));
      history.push_back(target);
    }
  }
  if (probs.empty()) throw DataError("interpolation: empty heldout corpus");

  InterpolationResult result;
  result.weights.assign(M, 1.0 / static_cast<double>(M));
  double prev_ll = -1e300;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<double> resp(M, 0.0);
    double ll = 0.0;
    for (const auto& row : probs) {
      double mix = 0.0;
      for (std::size_t m = 0; m < M; ++m) mix += result.weights[m] * row[m];
      ll += std::log(mix);
      for (std::size_t m = 0; m < M; ++m) {
        resp[m] += result.weights[m] * row[m] / mix;
      }
    }
    if (ll + 1e-9 < prev_ll) {
      throw ConsistencyError("interpolation: EM log-likelihood decreased");
    }
    prev_ll = ll;
    result.log_likelihoods.push_back(ll);
    for (std::size_t m = 0; m < M; ++m) {
      result.weights[m] = resp[m] / static_cast<double>(probs.size());
    }
  }
  return result;
}

InterpolatedLm::InterpolatedLm(std::vector<const LmScorer*> scorers,
                               std::vector<double> weights)
    : scorers_(std::move(scorers)), weights_(std::move(weights)) {
  check_shared_vocab(scorers_);
  if (weights_.size() != scorers_.size()) {
    throw ConfigError("interpolation: weight/scorer count mismatch");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (w < 0.0) throw ConfigError("interpolation: negative weight");
    sum += w;
  }
  if (sum <= 0.0) throw ConfigError("interpolation: weights sum to zero");
  for (double& w : weights_) w /= sum;
}

std::vector<double> InterpolatedLm::next_distribution(
    const std::vector<int>& history) const {
  std::vector<double> mix(vocab().size(), 0.0);
  for (std::size_t m = 0; m < scorers_.size(); ++m) {
    auto d = scorers_[m]->next_distribution(history);
    for (std::size_t w = 0; w < mix.size(); ++w) mix[w] += weights_[m] * d[w];
  }
  return mix;
}

void save_weights(const std::vector<std::string>& names,
                  const std::vector<double>& weights, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write weights: " + path);
  os << "# deskasr interpolation weights v1\n";
  os.precision(17);
  for (std::size_t i = 0; i < names.size(); ++i) {
    os << names[i] << " " << weights[i] << "\n";
  }
}

std::vector<std::pair<std::string, double>> load_weights(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open weights: " + path);
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name;
    double w = 0.0;
    ls >> name >> w;
    out.emplace_back(name, w);
  }
  return out;
}

}  // namespace deskasr::lm
