#include "deskasr/corpus/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "deskasr/errors.hpp"
#include "deskasr/gradcore/rng.hpp"

namespace deskasr::corpus {

namespace fs = std::filesystem;
using gradcore::Rng;
using nlohmann::json;

int Lexicon::word_id(const std::string& name) const {
  for (std::size_t i = 0; i < word_names.size(); ++i) {
    if (word_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::size_t> Corpus::label_histogram() const {
  std::vector<std::size_t> hist(config.n_states, 0);
  for (const auto& u : utterances) {
    for (int s : u.labels) hist[static_cast<std::size_t>(s)]++;
  }
  return hist;
}

std::uint64_t Corpus::content_hash() const {
  // FNV-1a over id/speaker/labels and the frame payload bytes.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& u : utterances) {
    mix_bytes(u.id.data(), u.id.size());
    mix_bytes(u.speaker_id.data(), u.speaker_id.size());
    mix_bytes(u.labels.data(), u.labels.size() * sizeof(int));
    mix_bytes(u.frames.data(), u.frames.size() * sizeof(double));
    mix_bytes(u.speaker_vector.data(), u.speaker_vector.size() * sizeof(double));
  }
  return h;
}

namespace {

std::string word_name(std::size_t w) {
  std::string s;
  std::size_t v = w;
  do {
    s.insert(s.begin(), static_cast<char>('a' + v % 26));
    v /= 26;
  } while (v > 0);
  return "w" + s;
}

Lexicon build_lexicon(const SynthConfig& cfg) {
  Lexicon lex;
  lex.n_states = cfg.n_states;
  lex.word_states.resize(cfg.n_words);
  lex.word_names.resize(cfg.n_words);
  for (std::size_t w = 0; w < cfg.n_words; ++w) {
    lex.word_names[w] = word_name(w);
    for (std::size_t j = 0; j < cfg.states_per_word; ++j) {
      lex.word_states[w].push_back(
          static_cast<int>((w * cfg.states_per_word + j) % cfg.n_states));
    }
  }
  return lex;
}

BigramGrammar build_grammar(const SynthConfig& cfg, Rng& rng) {
  BigramGrammar g;
  g.successors.resize(cfg.n_words);
  for (std::size_t w = 0; w < cfg.n_words; ++w) {
    // 2-3 successors per word; always includes (w+1) mod n for connectivity.
    const std::size_t n_succ = 2 + rng.below(2);
    std::vector<int> succ{static_cast<int>((w + 1) % cfg.n_words)};
    while (succ.size() < n_succ && succ.size() < cfg.n_words) {
      const int c = static_cast<int>(rng.below(cfg.n_words));
      if (std::find(succ.begin(), succ.end(), c) == succ.end()) succ.push_back(c);
    }
    std::sort(succ.begin(), succ.end());
    g.successors[w] = std::move(succ);
  }
  const std::size_t n_start = std::min<std::size_t>(cfg.n_words, 3);
  for (std::size_t i = 0; i < n_start; ++i) {
    g.start_words.push_back(static_cast<int>(rng.below(cfg.n_words)));
  }
  std::sort(g.start_words.begin(), g.start_words.end());
  g.start_words.erase(std::unique(g.start_words.begin(), g.start_words.end()),
                      g.start_words.end());
  return g;
}

}  // namespace

Corpus synth_corpus(const SynthConfig& cfg) {
  if (cfg.n_speakers < 1 || cfg.n_states < 1 || cfg.n_words < 1 || cfg.n_utts < 1 ||
      cfg.min_T < 1 || cfg.max_T < cfg.min_T || cfg.states_per_word < 1) {
    throw ConfigError("synth_corpus: all counts must be >= 1 and max_T >= min_T");
  }
  if (cfg.n_states < cfg.n_words) {
    throw ConfigError("synth_corpus: n_states (" + std::to_string(cfg.n_states) +
                      ") < n_words (" + std::to_string(cfg.n_words) +
                      "), word state sequences would collide");
  }

  Corpus corpus;
  corpus.config = cfg;
  corpus.lexicon = build_lexicon(cfg);

  Rng grammar_rng(gradcore::derive_seed(cfg.seed, "grammar"));
  corpus.grammar = build_grammar(cfg, grammar_rng);

  // State emission means and per-speaker shifts.
  Rng emission_rng(gradcore::derive_seed(cfg.seed, "emissions"));
  std::vector<std::vector<double>> state_mean(cfg.n_states,
                                              std::vector<double>(cfg.feature_dim));
  for (auto& m : state_mean) {
    for (auto& v : m) v = emission_rng.normal(0.0, cfg.state_separation);
  }
  std::vector<std::vector<double>> speaker_shift(cfg.n_speakers,
                                                 std::vector<double>(cfg.feature_dim));
  std::vector<std::vector<double>> speaker_embed(cfg.n_speakers,
                                                 std::vector<double>(cfg.speaker_dim));
  for (std::size_t s = 0; s < cfg.n_speakers; ++s) {
    corpus.speaker_names.push_back("spk" + std::to_string(s));
    for (auto& v : speaker_shift[s]) v = emission_rng.normal(0.0, cfg.speaker_shift);
    for (auto& v : speaker_embed[s]) v = emission_rng.uniform(-0.8, 0.8);
  }

  Rng utt_rng(gradcore::derive_seed(cfg.seed, "utterances"));
  for (std::size_t ui = 0; ui < cfg.n_utts; ++ui) {
    Utterance u;
    u.F = cfg.feature_dim;
    std::ostringstream id;
    id << "utt" << std::setw(4) << std::setfill('0') << ui;
    u.id = id.str();
    const std::size_t spk = utt_rng.below(cfg.n_speakers);
    u.speaker_id = corpus.speaker_names[spk];

    // Walk the grammar until the expanded state sequence fills [min_T, max_T].
    const std::size_t target_T =
        cfg.min_T + utt_rng.below(cfg.max_T - cfg.min_T + 1);
    int word = corpus.grammar.start_words[utt_rng.below(
        corpus.grammar.start_words.size())];
    while (true) {
      const auto& states = corpus.lexicon.states_of(word);
      std::vector<int> durations(states.size());
      std::size_t word_T = 0;
      for (auto& d : durations) {
        d = static_cast<int>(1 + utt_rng.below(cfg.max_state_dur));
        word_T += static_cast<std::size_t>(d);
      }
      if (u.labels.size() + word_T > cfg.max_T) {
        // Retry with 1 frame per state; stop if even that does not fit.
        for (auto& d : durations) d = 1;
        word_T = states.size();
        if (u.labels.size() + word_T > cfg.max_T) break;
      }
      u.words.push_back(word);
      for (std::size_t j = 0; j < states.size(); ++j) {
        for (int k = 0; k < durations[j]; ++k) u.labels.push_back(states[j]);
      }
      if (u.labels.size() >= target_T) break;
      const auto& succ = corpus.grammar.successors[word];
      word = succ[utt_rng.below(succ.size())];
    }
    if (u.words.empty()) {
      throw ConfigError("synth_corpus: max_T too short for a single word");
    }
    u.T = u.labels.size();

    u.frames.resize(u.T * u.F);
    for (std::size_t t = 0; t < u.T; ++t) {
      const auto& mean = state_mean[static_cast<std::size_t>(u.labels[t])];
      for (std::size_t f = 0; f < u.F; ++f) {
        u.frames[t * u.F + f] =
            mean[f] + speaker_shift[spk][f] + utt_rng.normal(0.0, cfg.frame_noise);
      }
    }
    u.speaker_vector.resize(cfg.speaker_dim);
    for (std::size_t d = 0; d < cfg.speaker_dim; ++d) {
      u.speaker_vector[d] =
          speaker_embed[spk][d] + utt_rng.normal(0.0, cfg.speaker_vector_noise);
    }
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "data");
  {
    std::ofstream manifest(fs::path(dir) / "manifest.tsv");
    manifest << "# deskasr-corpus-v1\nid\tspeaker\tT\tframes\tlabels\n";
    for (const auto& u : corpus.utterances) {
      manifest << u.id << "\t" << u.speaker_id << "\t" << u.T << "\tdata/" << u.id
               << ".f64\tdata/" << u.id << ".lab\n";
    }
  }
  for (const auto& u : corpus.utterances) {
    std::ofstream fr(fs::path(dir) / "data" / (u.id + ".f64"), std::ios::binary);
    fr.write(reinterpret_cast<const char*>(u.frames.data()),
             static_cast<std::streamsize>(u.frames.size() * sizeof(double)));
    std::ofstream lb(fs::path(dir) / "data" / (u.id + ".lab"));
    for (int s : u.labels) lb << s << "\n";
  }

  json meta;
  meta["version"] = 1;
  meta["config"] = {{"seed", corpus.config.seed},
                    {"n_speakers", corpus.config.n_speakers},
                    {"n_states", corpus.config.n_states},
                    {"n_words", corpus.config.n_words},
                    {"states_per_word", corpus.config.states_per_word},
                    {"n_utts", corpus.config.n_utts},
                    {"min_T", corpus.config.min_T},
                    {"max_T", corpus.config.max_T},
                    {"feature_dim", corpus.config.feature_dim},
                    {"speaker_dim", corpus.config.speaker_dim},
                    {"state_separation", corpus.config.state_separation},
                    {"speaker_shift", corpus.config.speaker_shift},
                    {"frame_noise", corpus.config.frame_noise},
                    {"speaker_vector_noise", corpus.config.speaker_vector_noise},
                    {"max_state_dur", corpus.config.max_state_dur}};
  meta["lexicon"] = {{"n_states", corpus.lexicon.n_states},
                     {"word_states", corpus.lexicon.word_states},
                     {"word_names", corpus.lexicon.word_names}};
  meta["grammar"] = {{"successors", corpus.grammar.successors},
                     {"start_words", corpus.grammar.start_words}};
  meta["speakers"] = corpus.speaker_names;
  json uj = json::array();
  for (const auto& u : corpus.utterances) {
    uj.push_back(
        {{"id", u.id}, {"words", u.words}, {"speaker_vector", u.speaker_vector}});
  }
  meta["utterances"] = uj;
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(1) << "\n";

  // Transcripts: first 80% train, next 10% heldout, last 10% eval references.
  const std::size_t n = corpus.utterances.size();
  const std::size_t train_end = n * 8 / 10;
  const std::size_t held_end = n * 9 / 10;
  auto write_text = [&](const std::string& name, std::size_t from, std::size_t to) {
    std::ofstream os(fs::path(dir) / name);
    for (std::size_t i = from; i < to; ++i) {
      const auto& u = corpus.utterances[i];
      for (std::size_t j = 0; j < u.words.size(); ++j) {
        if (j) os << " ";
        os << corpus.lexicon.word_names[static_cast<std::size_t>(u.words[j])];
      }
      os << "\n";
    }
  };
  write_text("train.txt", 0, train_end);
  write_text("heldout.txt", train_end, held_end);
  {
    std::ofstream os(fs::path(dir) / "eval.ref.trn");
    for (std::size_t i = held_end; i < n; ++i) {
      const auto& u = corpus.utterances[i];
      for (std::size_t j = 0; j < u.words.size(); ++j) {
        if (j) os << " ";
        os << corpus.lexicon.word_names[static_cast<std::size_t>(u.words[j])];
      }
      os << " (" << u.id << ")\n";
    }
  }
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream metaf(fs::path(dir) / "meta.json");
  if (!metaf) throw DataError("load_corpus: missing meta.json in " + dir);
  json meta = json::parse(metaf);
  if (meta.value("version", 0) != 1) {
    throw DataError("load_corpus: unsupported corpus version in " + dir);
  }
  Corpus corpus;
  const auto& c = meta["config"];
  corpus.config.seed = c["seed"].get<std::uint64_t>();
  corpus.config.n_speakers = c["n_speakers"].get<std::size_t>();
  corpus.config.n_states = c["n_states"].get<std::size_t>();
  corpus.config.n_words = c["n_words"].get<std::size_t>();
  corpus.config.states_per_word = c["states_per_word"].get<std::size_t>();
  corpus.config.n_utts = c["n_utts"].get<std::size_t>();
  corpus.config.min_T = c["min_T"].get<std::size_t>();
  corpus.config.max_T = c["max_T"].get<std::size_t>();
  corpus.config.feature_dim = c["feature_dim"].get<std::size_t>();
  corpus.config.speaker_dim = c["speaker_dim"].get<std::size_t>();
  corpus.config.state_separation = c["state_separation"].get<double>();
  corpus.config.speaker_shift = c["speaker_shift"].get<double>();
  corpus.config.frame_noise = c["frame_noise"].get<double>();
  corpus.config.speaker_vector_noise = c["speaker_vector_noise"].get<double>();
  corpus.config.max_state_dur = c["max_state_dur"].get<std::size_t>();

  corpus.lexicon.n_states = meta["lexicon"]["n_states"].get<std::size_t>();
  corpus.lexicon.word_states =
      meta["lexicon"]["word_states"].get<std::vector<std::vector<int>>>();
  corpus.lexicon.word_names =
      meta["lexicon"]["word_names"].get<std::vector<std::string>>();
  corpus.grammar.successors =
      meta["grammar"]["successors"].get<std::vector<std::vector<int>>>();
  corpus.grammar.start_words = meta["grammar"]["start_words"].get<std::vector<int>>();
  corpus.speaker_names = meta["speakers"].get<std::vector<std::string>>();

  std::ifstream manifest(fs::path(dir) / "manifest.tsv");
  if (!manifest) throw DataError("load_corpus: missing manifest.tsv in " + dir);
  std::string line;
  std::getline(manifest, line);  // version comment
  std::getline(manifest, line);  // header
  std::size_t idx = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    Utterance u;
    std::string frames_file, labels_file;
    is >> u.id >> u.speaker_id >> u.T >> frames_file >> labels_file;
    u.F = corpus.config.feature_dim;
    u.frames.resize(u.T * u.F);
    std::ifstream fr(fs::path(dir) / frames_file, std::ios::binary);
    if (!fr) throw DataError("load_corpus: missing " + frames_file);
    fr.read(reinterpret_cast<char*>(u.frames.data()),
            static_cast<std::streamsize>(u.frames.size() * sizeof(double)));
    if (fr.gcount() != static_cast<std::streamsize>(u.frames.size() * sizeof(double))) {
      throw DataError("load_corpus: truncated " + frames_file);
    }
    std::ifstream lb(fs::path(dir) / labels_file);
    int s;
    while (lb >> s) u.labels.push_back(s);
    if (u.labels.size() != u.T) {
      throw DataError("load_corpus: label count mismatch for " + u.id);
    }
    const auto& uj = meta["utterances"][idx];
    if (uj["id"].get<std::string>() != u.id) {
      throw DataError("load_corpus: meta/manifest order mismatch at " + u.id);
    }
    u.words = uj["words"].get<std::vector<int>>();
    u.speaker_vector = uj["speaker_vector"].get<std::vector<double>>();
    corpus.utterances.push_back(std::move(u));
    ++idx;
  }
  return corpus;
}

std::vector<std::vector<std::string>> transcript_sentences(const Corpus& corpus,
                                                           std::size_t from,
                                                           std::size_t to) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = from; i < to && i < corpus.utterances.size(); ++i) {
    std::vector<std::string> sent;
    for (int w : corpus.utterances[i].words) {
      sent.push_back(corpus.lexicon.word_names[static_cast<std::size_t>(w)]);
    }
    out.push_back(std::move(sent));
  }
  return out;
}

}  // namespace deskasr::corpus
