#include "deskasr/fusion/frame_scores.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "deskasr/errors.hpp"
#include "deskasr/gradcore/ops.hpp"

namespace deskasr::fusion {

void FrameScores::validate() const {
  if (log_posteriors.size() != T * n_states) {
    throw FusionError("frame scores: payload size does not match T x n_states");
  }
  for (std::size_t t = 0; t < T; ++t) {
    const double lse = gradcore::log_sum_exp(
        std::span<const double>(log_posteriors.data() + t * n_states, n_states));
    if (std::abs(lse) > 1e-9) {
      throw FusionError("frame scores: row " + std::to_string(t) +
                        " is not a log-distribution (logsumexp=" +
                        std::to_string(lse) + ")");
    }
  }
}

FrameScores scores_from_logits(std::string model_id, std::size_t T,
                               std::size_t n_states, std::vector<double> logits) {
  gradcore::log_softmax_rows_inplace(logits, T, n_states);
  FrameScores s;
  s.model_id = std::move(model_id);
  s.T = T;
  s.n_states = n_states;
  s.log_posteriors = std::move(logits);
  return s;
}

void save_frame_scores(const FrameScores& scores, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << "FRAMESCORES v1 T=" << scores.T << " states=" << scores.n_states
     << " model=" << scores.model_id << "\n";
  os.write(reinterpret_cast<const char*>(scores.log_posteriors.data()),
           static_cast<std::streamsize>(scores.log_posteriors.size() * sizeof(double)));
}

FrameScores load_frame_scores(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open frame scores: " + path);
  std::string header;
  std::getline(is, header);
  std::istringstream hs(header);
  std::string magic, version, field;
  hs >> magic >> version;
  if (magic != "FRAMESCORES" || version != "v1") {
    throw DataError("bad frame scores header in " + path);
  }
  FrameScores s;
  while (hs >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "T") {
      s.T = std::stoull(val);
    } else if (key == "states") {
      s.n_states = std::stoull(val);
    } else if (key == "model") {
      s.model_id = val;
    }
  }
  s.log_posteriors.resize(s.T * s.n_states);
  is.read(reinterpret_cast<char*>(s.log_posteriors.data()),
          static_cast<std::streamsize>(s.log_posteriors.size() * sizeof(double)));
  if (is.gcount() !=
      static_cast<std::streamsize>(s.log_posteriors.size() * sizeof(double))) {
    throw DataError("truncated frame scores payload in " + path);
  }
  return s;
}

}  // namespace deskasr::fusion
