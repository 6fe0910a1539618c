#include "data/toy_corpus.h"

#include <cmath>
#include <cstdio>
#include <iterator>
#include <numbers>

#include "core/error.h"
#include "core/rng.h"

namespace rssl {

  namespace fs = std::filesystem;

  namespace {
    struct Formants {
      double low;
      double high;
    };

    // Well separated tone pairs, one per letter of kToyAlphabet.
    constexpr Formants kLetterTones[] = {
      {310.0, 1250.0}, {420.0, 2150.0}, {530.0, 1480.0}, {640.0, 2600.0},
      {750.0, 1720.0}, {360.0, 2900.0}, {880.0, 1960.0}, {480.0, 3200.0},
    };

    // Small lexicon so transcripts carry word structure a character LM can
    // pick up.
    constexpr const char* kToyLexicon[] = {
      "BAD", "CAB", "FED", "HEAD", "BEE", "ACE", "DEAF", "FACE",
      "EGG", "HAG", "CHEF", "BEACH", "FADE", "CAGE", "HEDGE", "GAB",
    };

    std::string make_id(const char* prefix, int index) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s%04d", prefix, index);
      return buf;
    }
  }

  AudioClip synthesize_toy_utterance(const std::string& transcript, std::uint64_t seed, int sample_rate) {
    Rng rng(seed);
    const double fs_hz = static_cast<double>(sample_rate);
    auto silence = [&](double seconds, std::vector<double>& out) {
      out.insert(out.end(), static_cast<std::size_t>(seconds * fs_hz), 0.0);
    };

    AudioClip clip;
    clip.sample_rate = sample_rate;
    silence(0.015 + 0.01 * rng.uniform(), clip.samples);
    const std::string alphabet = kToyAlphabet;
    for (char ch : transcript) {
      if (ch == ' ') {
        silence(0.03 + 0.01 * rng.uniform(), clip.samples);
        continue;
      }
      const auto pos = alphabet.find(ch);
      if (pos == std::string::npos)
        fail(ErrorKind::Usage, "BadArgument", std::string("toy transcript character '") + ch + "' not in alphabet");
      const Formants f = kLetterTones[pos];
      const double jitter = 1.0 + 0.03 * (2.0 * rng.uniform() - 1.0);
      const double amp = 0.25 + 0.1 * rng.uniform();
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      const auto n = static_cast<std::size_t>((0.055 + 0.025 * rng.uniform()) * fs_hz);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs_hz;
        const double env = std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        const double s = 0.6 * std::sin(2.0 * std::numbers::pi * f.low * jitter * t + phase)
                       + 0.4 * std::sin(2.0 * std::numbers::pi * f.high * jitter * t);
        clip.samples.push_back(amp * env * env * s);
      }
      silence(0.008, clip.samples);
    }
    silence(0.015 + 0.01 * rng.uniform(), clip.samples);
    // Faint recording floor so no stretch is digitally silent.
    Rng floor_rng(derive_seed(seed, "toy/floor"));
    for (double& x : clip.samples)
      x += 0.002 * floor_rng.normal();
    return clip;
  }

  std::string random_toy_transcript(std::uint64_t seed) {
    Rng rng(seed);
    const auto n_lex = static_cast<std::int64_t>(std::size(kToyLexicon));
    const auto words = rng.uniform_int(2, 3);
    std::string text;
    for (std::int64_t w = 0; w < words; ++w) {
      if (w > 0)
        text.push_back(' ');
      text += kToyLexicon[rng.uniform_int(0, n_lex - 1)];
    }
    return text;
  }

  AudioClip synthesize_toy_noise(double seconds, std::uint64_t seed, int sample_rate) {
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(seconds * sample_rate);
    const double pole = 0.95 * rng.uniform();
    const double mod_rate = 0.5 + 3.0 * rng.uniform();
    const double mod_depth = 0.5 * rng.uniform();
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(n);
    double state = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      state = pole * state + (1.0 - pole) * rng.normal();
      const double t = static_cast<double>(i) / sample_rate;
      clip.samples[i] = state * (1.0 - mod_depth + mod_depth * std::sin(2.0 * std::numbers::pi * mod_rate * t));
    }
    const double rms = std::sqrt(mean_power(clip.samples));
    for (double& s : clip.samples)
      s *= 0.1 / rms;
    return clip;
  }

  ToyCorpus make_toy_corpus(const fs::path& out_dir, std::uint64_t seed, int n_utts, int n_noise) {
    if (n_utts <= 0)
      fail(ErrorKind::Usage, "BadArgument", "n_utts must be positive");
    if (n_noise <= 0)
      fail(ErrorKind::Usage, "BadArgument", "n_noise must be positive");

    ToyCorpus corpus;
    for (int i = 0; i < n_utts; ++i) {
      const std::string id = make_id("utt", i);
      const std::string text = random_toy_transcript(derive_seed(seed, "toy-text", static_cast<std::uint64_t>(i)));
      AudioClip clip = synthesize_toy_utterance(text, derive_seed(seed, "toy-audio", static_cast<std::uint64_t>(i)));
      clip.id = id;
      validate_clip(clip);
      const fs::path path = out_dir / "clean" / (id + ".wav");
      write_wav(path, clip);
      ManifestEntry e;
      e.utterance_id = id;
      e.audio_path = path;
      e.duration_seconds = clip.duration_seconds();
      e.transcript = text;
      e.role = Role::Clean;
      corpus.clean.entries.push_back(std::move(e));
    }
    for (int i = 0; i < n_noise; ++i) {
      const std::string id = make_id("noise", i);
      AudioClip clip = synthesize_toy_noise(1.5, derive_seed(seed, "toy-noise", static_cast<std::uint64_t>(i)));
      clip.id = id;
      const fs::path path = out_dir / "noise" / (id + ".wav");
      write_wav(path, clip);
      ManifestEntry e;
      e.utterance_id = id;
      e.audio_path = path;
      e.duration_seconds = clip.duration_seconds();
      e.role = Role::Noise;
      corpus.noise.entries.push_back(std::move(e));
    }
    corpus.clean_manifest_path = out_dir / "clean.jsonl";
    corpus.noise_manifest_path = out_dir / "noise.jsonl";
    save_manifest(corpus.clean, corpus.clean_manifest_path);
    save_manifest(corpus.noise, corpus.noise_manifest_path);
    return corpus;
  }

}
