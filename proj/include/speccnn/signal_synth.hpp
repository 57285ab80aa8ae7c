#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "speccnn/rng.hpp"

namespace speccnn {

struct ToneSpec {
  double frequency_hz = 0.0;  // (0, 1000]
  double amplitude = 0.0;     // (0, 1]
  double onset_s = 0.0;
  double duration_s = 0.0;
};

// The defining tone set of one audio source. Regenerating from the same
// (seed, params) is bit-identical.
struct SignatureSpec {
  std::vector<ToneSpec> tones;  // 1..10
  std::string signature_id;
  uint64_t seed = 0;
};

enum class NoiseKind { gaussian };

struct NoiseSpec {
  // Tone power over noise power, in dB. +infinity disables noise.
  double snr_db = 3.0;
  NoiseKind kind = NoiseKind::gaussian;

  bool enabled() const { return snr_db != std::numeric_limits<double>::infinity(); }
  static NoiseSpec off() { return {std::numeric_limits<double>::infinity(), NoiseKind::gaussian}; }
};

enum class Provenance { target, negative, noise_only };

struct AudioSignal {
  std::vector<double> samples;  // peak-normalized, max |s| <= 1
  int sample_rate_hz = 44100;
  Provenance provenance = Provenance::noise_only;
  NoiseSpec noise;
  uint64_t seed = 0;
  std::optional<SignatureSpec> signature;
};

struct SignatureParams {
  int tone_count_min = 1;
  int tone_count_max = 10;
  double freq_min_hz = 30.0;
  double freq_max_hz = 1000.0;
  double amp_min = 0.5;
  double amp_max = 1.0;
  // Tone length as a fraction of the signal, sampled in [min_tone_fraction, 1].
  double min_tone_fraction = 0.4;
  double duration_s = 0.75;
};

enum class Regime { binary, one_class, multiclass, pairs, triplets };
enum class Split { train, test };

struct LabeledItem {
  // 1 signal (binary/one_class/multiclass), 2 (pairs: a, b), 3 (triplets:
  // anchor, positive, negative).
  std::vector<AudioSignal> signals;
  int label = 0;  // class label, or same/different flag for pairs
};

struct LabeledAudioSet {
  Regime regime = Regime::binary;
  Split split = Split::train;
  std::vector<LabeledItem> items;
};

struct GenOptions {
  SignatureParams sig;
  int sample_rate_hz = 44100;
  // Fraction of binary negatives that are noise-only signals.
  double noise_only_fraction = 0.25;
  // A negative signature is rejected when it has the target's tone count and
  // every tone within +-1 bin of some target tone.
  double reject_bin_hz = 44100.0 / 1024.0;
};

SignatureSpec sample_signature(uint64_t seed, const SignatureParams& params);

// samples = sum of gated sinusoids plus Gaussian noise scaled to the
// requested SNR, then peak-normalized. sig == nullptr yields noise only.
AudioSignal synthesize(const SignatureSpec* sig, const NoiseSpec& noise, double duration_s,
                       int sample_rate_hz, uint64_t seed);

bool matches_target(const SignatureSpec& candidate, const SignatureSpec& target,
                    double bin_hz);

LabeledAudioSet make_binary_dataset(const SignatureSpec& target, int n_pos, int n_neg,
                                    const NoiseSpec& noise, uint64_t seed,
                                    const GenOptions& opt, Split split = Split::train);

struct OneClassData {
  LabeledAudioSet train;  // positives only
  LabeledAudioSet test;   // held-out positives + random negatives
};

// n_pos positives are split train/test by test_fraction; n_test_neg < 0
// means "as many negatives as held-out positives".
OneClassData make_one_class_dataset(const SignatureSpec& target, int n_pos,
                                    const NoiseSpec& noise, uint64_t seed,
                                    const GenOptions& opt, double test_fraction = 1.0 / 3.0,
                                    int n_test_neg = -1);

LabeledAudioSet make_multiclass_dataset(const std::vector<SignatureSpec>& signatures,
                                        int n_per_class, const NoiseSpec& noise, uint64_t seed,
                                        const GenOptions& opt);

LabeledAudioSet make_pair_dataset(const std::vector<SignatureSpec>& signatures, int n_pairs,
                                  const NoiseSpec& noise, uint64_t seed, const GenOptions& opt,
                                  Split split = Split::train);

LabeledAudioSet make_triplet_dataset(const std::vector<SignatureSpec>& signatures,
                                     int n_triplets, const NoiseSpec& noise, uint64_t seed,
                                     const GenOptions& opt, Split split = Split::train);

}  // namespace speccnn
