#include "speccnn/signal_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace speccnn {

namespace {

void validate_params(const SignatureParams& p) {
  if (p.tone_count_min < 1 || p.tone_count_max > 10 || p.tone_count_min > p.tone_count_max)
    throw std::invalid_argument("signature params: tone count range must lie in [1, 10]");
  if (p.freq_min_hz <= 0.0 || p.freq_max_hz > 1000.0 || p.freq_min_hz > p.freq_max_hz)
    throw std::invalid_argument("signature params: frequency range must lie in (0, 1000]");
  if (p.amp_min <= 0.0 || p.amp_max > 1.0 || p.amp_min > p.amp_max)
    throw std::invalid_argument("signature params: amplitude range must lie in (0, 1]");
  if (p.min_tone_fraction <= 0.0 || p.min_tone_fraction > 1.0)
    throw std::invalid_argument("signature params: min_tone_fraction must lie in (0, 1]");
  if (p.duration_s <= 0.0) throw std::invalid_argument("signature params: duration must be > 0");
}

std::string hex_id(uint64_t seed) {
  static const char* digits = "0123456789abcdef";
  std::string s = "sig-";
  for (int i = 15; i >= 0; --i) s += digits[(seed >> (4 * i)) & 0xf];
  return s;
}

}  // namespace

SignatureSpec sample_signature(uint64_t seed, const SignatureParams& params) {
  validate_params(params);
  Rng rng(seed);
  SignatureSpec sig;
  sig.seed = seed;
  sig.signature_id = hex_id(seed);
  const int count = rng.uniform_int(params.tone_count_min, params.tone_count_max);
  sig.tones.reserve(count);
  for (int i = 0; i < count; ++i) {
    ToneSpec t;
    t.frequency_hz = rng.uniform(params.freq_min_hz, params.freq_max_hz);
    t.amplitude = rng.uniform(params.amp_min, params.amp_max);
    t.duration_s = rng.uniform(params.min_tone_fraction, 1.0) * params.duration_s;
    t.onset_s = rng.uniform(0.0, params.duration_s - t.duration_s);
    sig.tones.push_back(t);
  }
  return sig;
}

AudioSignal synthesize(const SignatureSpec* sig, const NoiseSpec& noise, double duration_s,
                       int sample_rate_hz, uint64_t seed) {
  if (duration_s <= 0.0) throw std::invalid_argument("synthesize: duration must be > 0");
  if (sample_rate_hz <= 0) throw std::invalid_argument("synthesize: sample rate must be > 0");
  if (sig) {
    for (const ToneSpec& t : sig->tones) {
      if (sample_rate_hz <= 2.0 * t.frequency_hz)
        throw std::invalid_argument("synthesize: sample rate below Nyquist of tone");
    }
  }

  const int n = static_cast<int>(std::llround(duration_s * sample_rate_hz));
  std::vector<double> samples(n, 0.0);

  double tone_power = 0.0;
  if (sig) {
    for (const ToneSpec& t : sig->tones) {
      const int n0 = std::max<int>(0, static_cast<int>(std::llround(t.onset_s * sample_rate_hz)));
      const int n1 = std::min<int>(
          n, static_cast<int>(std::llround((t.onset_s + t.duration_s) * sample_rate_hz)));
      const double w = 2.0 * std::numbers::pi * t.frequency_hz / sample_rate_hz;
      for (int i = n0; i < n1; ++i) samples[i] += t.amplitude * std::sin(w * i);
    }
    for (double s : samples) tone_power += s * s;
    tone_power /= n;
  }

  if (noise.enabled()) {
    // SNR is tone power over the full duration versus noise power.
    const double noise_power =
        tone_power > 0.0 ? tone_power * std::pow(10.0, -noise.snr_db / 10.0) : 1.0;
    const double sd = std::sqrt(noise_power);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) samples[i] += sd * rng.normal();
  }

  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::fabs(s));
  if (peak > 0.0) {
    const double inv = 1.0 / peak;
    for (double& s : samples) s *= inv;
  }

  AudioSignal out;
  out.samples = std::move(samples);
  out.sample_rate_hz = sample_rate_hz;
  out.noise = noise;
  out.seed = seed;
  if (sig) {
    out.signature = *sig;
    out.provenance = Provenance::target;
  } else {
    out.provenance = Provenance::noise_only;
  }
  return out;
}

bool matches_target(const SignatureSpec& candidate, const SignatureSpec& target,
                    double bin_hz) {
  if (candidate.tones.size() != target.tones.size()) return false;
  for (const ToneSpec& c : candidate.tones) {
    bool near = false;
    for (const ToneSpec& t : target.tones) {
      if (std::fabs(c.frequency_hz - t.frequency_hz) <= bin_hz) {
        near = true;
        break;
      }
    }
    if (!near) return false;
  }
  return true;
}

namespace {

// A fresh random signature that does not collide with the target. Collisions
// are resampled from sub-seeds of the item seed.
SignatureSpec sample_negative_signature(uint64_t item_seed, const SignatureSpec& target,
                                        const GenOptions& opt) {
  for (uint64_t attempt = 0; attempt < 1000; ++attempt) {
    SignatureSpec cand = sample_signature(derive_seed(item_seed, attempt), opt.sig);
    if (!matches_target(cand, target, opt.reject_bin_hz)) return cand;
  }
  throw std::runtime_error("sample_negative_signature: rejection loop did not terminate");
}

AudioSignal make_negative(uint64_t item_seed, const SignatureSpec& target,
                          const NoiseSpec& noise, const GenOptions& opt) {
  Rng rng(derive_seed(item_seed, 0xb00));
  if (rng.uniform() < opt.noise_only_fraction) {
    AudioSignal s = synthesize(nullptr, noise, opt.sig.duration_s, opt.sample_rate_hz,
                               derive_seed(item_seed, 1));
    s.provenance = Provenance::noise_only;
    return s;
  }
  SignatureSpec neg = sample_negative_signature(item_seed, target, opt);
  AudioSignal s =
      synthesize(&neg, noise, opt.sig.duration_s, opt.sample_rate_hz, derive_seed(item_seed, 1));
  s.provenance = Provenance::negative;
  return s;
}

}  // namespace

LabeledAudioSet make_binary_dataset(const SignatureSpec& target, int n_pos, int n_neg,
                                    const NoiseSpec& noise, uint64_t seed,
                                    const GenOptions& opt, Split split) {
  if (n_pos <= 0 || n_neg <= 0)
    throw std::invalid_argument("make_binary_dataset: n_pos and n_neg must be > 0");
  LabeledAudioSet set;
  set.regime = Regime::binary;
  set.split = split;
  set.items.reserve(n_pos + n_neg);
  for (int i = 0; i < n_pos; ++i) {
    const uint64_t s = derive_seed(seed, static_cast<uint64_t>(i));
    AudioSignal a = synthesize(&target, noise, opt.sig.duration_s, opt.sample_rate_hz, s);
    a.provenance = Provenance::target;
    set.items.push_back({{std::move(a)}, 1});
  }
  for (int i = 0; i < n_neg; ++i) {
    const uint64_t s = derive_seed(seed, static_cast<uint64_t>(n_pos + i));
    set.items.push_back({{make_negative(s, target, noise, opt)}, 0});
  }
  return set;
}

OneClassData make_one_class_dataset(const SignatureSpec& target, int n_pos,
                                    const NoiseSpec& noise, uint64_t seed,
                                    const GenOptions& opt, double test_fraction,
                                    int n_test_neg) {
  if (n_pos < 2)
    throw std::invalid_argument("make_one_class_dataset: need n_pos >= 2 to split");
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("make_one_class_dataset: test_fraction must lie in (0, 1)");
  int n_test_pos = static_cast<int>(std::llround(n_pos * test_fraction));
  n_test_pos = std::clamp(n_test_pos, 1, n_pos - 1);
  const int n_train = n_pos - n_test_pos;
  if (n_test_neg < 0) n_test_neg = n_test_pos;

  OneClassData data;
  data.train.regime = Regime::one_class;
  data.train.split = Split::train;
  data.test.regime = Regime::one_class;
  data.test.split = Split::test;
  for (int i = 0; i < n_pos; ++i) {
    const uint64_t s = derive_seed(seed, static_cast<uint64_t>(i));
    AudioSignal a = synthesize(&target, noise, opt.sig.duration_s, opt.sample_rate_hz, s);
    a.provenance = Provenance::target;
    LabeledAudioSet& dst = i < n_train ? data.train : data.test;
    dst.items.push_back({{std::move(a)}, 1});
  }
  for (int i = 0; i < n_test_neg; ++i) {
    const uint64_t s = derive_seed(seed, static_cast<uint64_t>(n_pos + i));
    data.test.items.push_back({{make_negative(s, target, noise, opt)}, 0});
  }
  return data;
}

LabeledAudioSet make_multiclass_dataset(const std::vector<SignatureSpec>& signatures,
                                        int n_per_class, const NoiseSpec& noise, uint64_t seed,
                                        const GenOptions& opt) {
  if (signatures.size() < 2)
    throw std::invalid_argument("make_multiclass_dataset: need at least 2 signatures");
  if (n_per_class <= 0)
    throw std::invalid_argument("make_multiclass_dataset: n_per_class must be > 0");
  LabeledAudioSet set;
  set.regime = Regime::multiclass;
  set.split = Split::train;
  for (size_t k = 0; k < signatures.size(); ++k) {
    for (int i = 0; i < n_per_class; ++i) {
      const uint64_t s = derive_seed(seed, k * static_cast<uint64_t>(n_per_class) + i);
      AudioSignal a =
          synthesize(&signatures[k], noise, opt.sig.duration_s, opt.sample_rate_hz, s);
      a.provenance = Provenance::target;
      set.items.push_back({{std::move(a)}, static_cast<int>(k)});
    }
  }
  return set;
}

LabeledAudioSet make_pair_dataset(const std::vector<SignatureSpec>& signatures, int n_pairs,
                                  const NoiseSpec& noise, uint64_t seed, const GenOptions& opt,
                                  Split split) {
  if (signatures.size() < 2)
    throw std::invalid_argument("make_pair_dataset: need at least 2 signatures");
  if (n_pairs <= 0) throw std::invalid_argument("make_pair_dataset: n_pairs must be > 0");
  LabeledAudioSet set;
  set.regime = Regime::pairs;
  set.split = split;
  const int n_same = (n_pairs + 1) / 2;
  const int n_sig = static_cast<int>(signatures.size());
  for (int i = 0; i < n_pairs; ++i) {
    const uint64_t s = derive_seed(seed, static_cast<uint64_t>(i));
    Rng rng(s);
    const bool same = i < n_same;
    const int a = rng.uniform_int(0, n_sig - 1);
    int b = a;
    if (!same) {
      b = rng.uniform_int(0, n_sig - 2);
      if (b >= a) ++b;
    }
    AudioSignal sa = synthesize(&signatures[a], noise, opt.sig.duration_s, opt.sample_rate_hz,
                                derive_seed(s, 1));
    AudioSignal sb = synthesize(&signatures[b], noise, opt.sig.duration_s, opt.sample_rate_hz,
                                derive_seed(s, 2));
    set.items.push_back({{std::move(sa), std::move(sb)}, same ? 1 : 0});
  }
  return set;
}

LabeledAudioSet make_triplet_dataset(const std::vector<SignatureSpec>& signatures,
                                     int n_triplets, const NoiseSpec& noise, uint64_t seed,
                                     const GenOptions& opt, Split split) {
  if (signatures.size() < 2)
    throw std::invalid_argument("make_triplet_dataset: need at least 2 signatures");
  if (n_triplets <= 0)
    throw std::invalid_argument("make_triplet_dataset: n_triplets must be > 0");
  LabeledAudioSet set;
  set.regime = Regime::triplets;
  set.split = split;
  const int n_sig = static_cast<int>(signatures.size());
  for (int i = 0; i < n_triplets; ++i) {
    const uint64_t s = derive_seed(seed, static_cast<uint64_t>(i));
    Rng rng(s);
    const int a = rng.uniform_int(0, n_sig - 1);
    int nidx = rng.uniform_int(0, n_sig - 2);
    if (nidx >= a) ++nidx;
    AudioSignal anchor = synthesize(&signatures[a], noise, opt.sig.duration_s,
                                    opt.sample_rate_hz, derive_seed(s, 1));
    AudioSignal pos = synthesize(&signatures[a], noise, opt.sig.duration_s, opt.sample_rate_hz,
                                 derive_seed(s, 2));
    AudioSignal neg = synthesize(&signatures[nidx], noise, opt.sig.duration_s,
                                 opt.sample_rate_hz, derive_seed(s, 3));
    neg.provenance = Provenance::negative;
    set.items.push_back({{std::move(anchor), std::move(pos), std::move(neg)}, 1});
  }
  return set;
}

}  // namespace speccnn
