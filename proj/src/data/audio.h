#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rssl {

  // Mono waveform with amplitudes nominally in [-1, 1].
  struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 16000;
    std::string id;

    std::size_t size() const { return samples.size(); }
    double duration_seconds() const {
      return static_cast<double>(samples.size()) / sample_rate;
    }
  };

  // Throws Data/InvalidClip when a clip is empty, has non-finite samples or a
  // non-positive rate.
  void validate_clip(const AudioClip& clip);

  // Mean squared amplitude over the whole clip.
  double mean_power(const std::vector<double>& samples);

  // 16-bit PCM RIFF/WAVE, mono. Samples are scaled by 32768 and clamped.
  void write_wav(const std::filesystem::path& path, const AudioClip& clip);
  AudioClip read_wav(const std::filesystem::path& path);

}
