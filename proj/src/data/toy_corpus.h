#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "data/audio.h"
#include "data/manifest.h"

namespace rssl {

  // Characters the synthetic "speech" is spelled with.
  inline constexpr const char* kToyAlphabet = "ABCDEFGH";

  // Renders a transcript (letters of kToyAlphabet and spaces) as a sequence of
  // enveloped two-tone bursts, one distinctive tone pair per letter.
  AudioClip synthesize_toy_utterance(const std::string& transcript, std::uint64_t seed, int sample_rate = 16000);

  // Two or three words drawn from a fixed toy lexicon.
  std::string random_toy_transcript(std::uint64_t seed);

  // Low-passed, amplitude-modulated Gaussian noise at roughly 0.1 RMS.
  AudioClip synthesize_toy_noise(double seconds, std::uint64_t seed, int sample_rate = 16000);

  struct ToyCorpus {
    Manifest clean;
    Manifest noise;
    std::filesystem::path clean_manifest_path;
    std::filesystem::path noise_manifest_path;
  };

  // Writes out_dir/{clean,noise}/*.wav plus clean.jsonl and noise.jsonl.
  ToyCorpus make_toy_corpus(const std::filesystem::path& out_dir, std::uint64_t seed, int n_utts, int n_noise);

}
