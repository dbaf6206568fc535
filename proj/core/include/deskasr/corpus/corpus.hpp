#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deskasr::corpus {

// One synthetic utterance: frame matrix with per-frame state labels plus the
// speaker identity and a noisy speaker embedding standing in for an i-vector.
struct Utterance {
  std::string id;
  std::size_t T = 0;
  std::size_t F = 0;
  std::vector<double> frames;  // T x F row-major
  std::vector<int> labels;     // length T, state ids
  std::vector<int> words;      // word sequence the labels were expanded from
  std::string speaker_id;
  std::vector<double> speaker_vector;  // length D_s

  double frame(std::size_t t, std::size_t f) const { return frames[t * F + f]; }
};

// Word -> state sequence expansion.
struct Lexicon {
  std::size_t n_states = 0;
  std::vector<std::vector<int>> word_states;  // indexed by word id
  std::vector<std::string> word_names;

  const std::vector<int>& states_of(int word) const { return word_states[word]; }
  int word_id(const std::string& name) const;
};

// Toy bigram grammar: per word a small successor set, uniform over it.
struct BigramGrammar {
  std::vector<std::vector<int>> successors;  // indexed by word id
  std::vector<int> start_words;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_speakers = 4;
  std::size_t n_states = 20;
  std::size_t n_words = 10;
  std::size_t states_per_word = 2;
  std::size_t n_utts = 50;
  std::size_t min_T = 40;
  std::size_t max_T = 80;
  std::size_t feature_dim = 16;   // per-frame feature dimension ("mel" bins)
  std::size_t speaker_dim = 4;    // synthetic i-vector dimension
  double state_separation = 2.2;  // distance scale between state means
  double speaker_shift = 0.8;     // additive per-speaker offset on frames
  double frame_noise = 0.45;
  double speaker_vector_noise = 0.05;
  std::size_t max_state_dur = 3;  // frames per state drawn from [1, max]
};

struct Corpus {
  SynthConfig config;
  Lexicon lexicon;
  BigramGrammar grammar;
  std::vector<Utterance> utterances;
  std::vector<std::string> speaker_names;

  std::vector<std::size_t> label_histogram() const;
  // Stable content hash over manifest-visible fields and payloads.
  std::uint64_t content_hash() const;
};

// Deterministic synthetic corpus. Frames are emitted from per-state Gaussian
// means offset by a per-speaker shift; word sequences follow the bigram
// grammar; labels expand words through the lexicon with random state
// durations. Throws ConfigError for degenerate settings (counts of zero, or
// n_states < n_words so word state sequences could not be distinct).
Corpus synth_corpus(const SynthConfig& cfg);

// Directory layout (version 1):
//   manifest.tsv   header line, then one row per utterance:
//                  id <tab> speaker <tab> T <tab> frames-file <tab> labels-file
//   meta.json      config echo, lexicon, grammar, speaker embeddings
//   data/<id>.f64  row-major fp64 frames, little-endian
//   data/<id>.lab  one state id per line
//   train.txt / heldout.txt / eval.ref.trn   transcripts (word names)
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

// Sentence lists for language modeling: word-name sequences per utterance.
std::vector<std::vector<std::string>> transcript_sentences(const Corpus& corpus,
                                                           std::size_t from,
                                                           std::size_t to);

}  // namespace deskasr::corpus
