#include "deskasr/lm/nbest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "deskasr/errors.hpp"
#include "deskasr/lm/interpolate.hpp"

namespace deskasr::lm {

void save_nbest(const std::vector<NBestList>& lists, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write nbest: " + path);
  os << "# deskasr-nbest-v1\n";
  os.precision(17);
  for (const auto& list : lists) {
    os << "UTT " << list.utt_id << "\n";
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
      const auto& e = list.entries[r];
      os << (r + 1) << " " << e.acoustic << " " << e.lm;
      for (const auto& w : e.words) os << " " << w;
      os << "\n";
    }
    os << "\n";
  }
}

std::vector<NBestList> load_nbest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open nbest: " + path);
  std::vector<NBestList> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "UTT") {
      NBestList list;
      ls >> list.utt_id;
      out.push_back(std::move(list));
      continue;
    }
    if (out.empty()) throw DataError("nbest: entry before any UTT line in " + path);
    NBestEntry e;
    // tag holds the rank; ranks are re-derived from order.
    ls >> e.acoustic >> e.lm;
    std::string w;
    while (ls >> w) e.words.push_back(w);
    if (e.words.empty()) throw DataError("nbest: entry without words in " + path);
    e.total = e.acoustic + e.lm;
    out.back().entries.push_back(std::move(e));
  }
  return out;
}

NBestList rescore_nbest(const NBestList& nbest,
                        const std::vector<const LmScorer*>& scorers,
                        const std::vector<double>& weights, double acoustic_weight,
                        double insertion_penalty, double lm_weight) {
  if (nbest.entries.empty()) {
    throw DataError("rescore_nbest: empty n-best list for " + nbest.utt_id);
  }
  if (scorers.empty()) throw ConfigError("rescore_nbest: no scorers");
  InterpolatedLm mix(scorers, scorers.size() == 1 ? std::vector<double>{1.0}
                                                  : weights);
  const Vocab& v = mix.vocab();
  NBestList out = nbest;
  for (auto& e : out.entries) {
    std::vector<int> history{v.bos()};
    double lm_logp = 0.0;
    for (const auto& w : e.words) {
      const int id = v.id(w);
      lm_logp += mix.log_prob(history, id);
      history.push_back(id);
    }
    lm_logp += mix.log_prob(history, v.eos());
    e.lm = lm_logp;
    e.total = acoustic_weight * e.acoustic + lm_weight * lm_logp -
              insertion_penalty * static_cast<double>(e.words.size());
  }
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const NBestEntry& a, const NBestEntry& b) {
                     return a.total > b.total;
                   });
  return out;
}

}  // namespace deskasr::lm
