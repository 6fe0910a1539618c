#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/rng.h"
#include "data/audio.h"
#include "data/manifest.h"

namespace rssl {

  struct NoisyPair {
    AudioClip noisy;
    AudioClip clean;
    double snr_db = 0.0;
    std::string noise_id;
    std::uint64_t seed = 0;

    // Diagnostics: applied noise gain and the joint peak rescale (1 if none).
    double noise_gain = 1.0;
    double rescale = 1.0;
  };

  // 10 log10(P_clean / P_(noisy - clean)) over the emitted waveforms.
  double measured_snr_db(const NoisyPair& pair);

  // Cuts (or circularly tiles) a seeded noise segment to the clean length,
  // scales it to the requested SNR and adds it. If the mixture would clip,
  // noisy and clean are rescaled together to a 0.99 peak.
  NoisyPair mix_at_snr(const AudioClip& clean, const AudioClip& noise, double snr_db, std::uint64_t seed);

  // Integer SNR uniform over [lo, hi] dB.
  int sample_snr(Rng& rng, int lo = 5, int hi = 20);

  struct EntryError {
    std::string utterance_id;
    std::string code;
    std::string message;
  };

  struct CorpusBuildResult {
    Manifest manifest;
    std::vector<EntryError> errors;
  };

  struct CorpusBuildOptions {
    std::uint64_t seed = 0;
    int snr_min = 5;
    int snr_max = 20;
  };

  // One noisy/clean pair per clean utterance under out_dir/{noisy,clean}/ and
  // a paired manifest at out_dir/noisy.jsonl. Each entry's randomness derives
  // from (seed, utterance_id). Failing entries are reported, not fatal.
  CorpusBuildResult build_noisy_corpus(const Manifest& clean_manifest, const Manifest& noise_manifest,
                                       const std::filesystem::path& out_dir, const CorpusBuildOptions& options);

  struct MultiChannelRecording {
    std::vector<AudioClip> channels;
    std::string id;
  };

  double pearson(const std::vector<double>& a, const std::vector<double>& b);

  // Channel whose summed Pearson correlation with all others is largest;
  // ties go to the lowest index.
  std::size_t select_reference_channel(const MultiChannelRecording& rec);

  // The k non-reference channels most correlated with the reference,
  // descending, ties by lowest index.
  std::vector<std::size_t> select_top_correlated(const MultiChannelRecording& rec, std::size_t reference, std::size_t k);

}
