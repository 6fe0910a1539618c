#include "data/synthesis.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "core/error.h"

namespace rssl {

  namespace fs = std::filesystem;

  double measured_snr_db(const NoisyPair& pair) {
    std::vector<double> residual(pair.noisy.samples.size());
    for (std::size_t i = 0; i < residual.size(); ++i)
      residual[i] = pair.noisy.samples[i] - pair.clean.samples[i];
    return 10.0 * std::log10(mean_power(pair.clean.samples) / mean_power(residual));
  }

  NoisyPair mix_at_snr(const AudioClip& clean, const AudioClip& noise, double snr_db, std::uint64_t seed) {
    validate_clip(clean);
    validate_clip(noise);
    if (clean.sample_rate != noise.sample_rate)
      fail(ErrorKind::Data, "RateMismatch",
           std::to_string(clean.sample_rate) + " Hz vs " + std::to_string(noise.sample_rate) + " Hz");
    const double p_clean = mean_power(clean.samples);
    if (!(p_clean > 0.0))
      fail(ErrorKind::Data, "SilentInput", "clean clip '" + clean.id + "' has zero power");
    if (!(mean_power(noise.samples) > 0.0))
      fail(ErrorKind::Data, "SilentInput", "noise clip '" + noise.id + "' has zero power");

    Rng rng(seed);
    const std::size_t n = clean.size();
    const std::size_t m = noise.size();
    std::vector<double> segment(n);
    if (m >= n) {
      const auto offset = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m - n)));
      std::copy_n(noise.samples.begin() + static_cast<std::ptrdiff_t>(offset), n, segment.begin());
    } else {
      const auto offset = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m - 1)));
      for (std::size_t i = 0; i < n; ++i)
        segment[i] = noise.samples[(offset + i) % m];
    }
    const double p_noise = mean_power(segment);
    if (!(p_noise > 0.0))
      fail(ErrorKind::Data, "SilentInput", "selected noise segment of '" + noise.id + "' has zero power");

    NoisyPair pair;
    pair.snr_db = snr_db;
    pair.noise_id = noise.id;
    pair.seed = seed;
    pair.noise_gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
    pair.clean = clean;
    pair.noisy = clean;
    pair.noisy.id = clean.id;

    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pair.noisy.samples[i] = clean.samples[i] + pair.noise_gain * segment[i];
      peak = std::max(peak, std::abs(pair.noisy.samples[i]));
    }
    if (peak > 1.0) {
      pair.rescale = 0.99 / peak;
      for (std::size_t i = 0; i < n; ++i) {
        pair.noisy.samples[i] *= pair.rescale;
        pair.clean.samples[i] *= pair.rescale;
      }
    }
    return pair;
  }

  int sample_snr(Rng& rng, int lo, int hi) {
    return static_cast<int>(rng.uniform_int(lo, hi));
  }

  CorpusBuildResult build_noisy_corpus(const Manifest& clean_manifest, const Manifest& noise_manifest,
                                       const fs::path& out_dir, const CorpusBuildOptions& options) {
    if (clean_manifest.empty())
      fail(ErrorKind::Data, "EmptyManifest", "clean manifest has no entries");
    if (noise_manifest.empty())
      fail(ErrorKind::Data, "EmptyManifest", "noise manifest has no entries");
    if (options.snr_min > options.snr_max)
      fail(ErrorKind::Usage, "BadArgument", "snr_min exceeds snr_max");

    std::map<std::size_t, AudioClip> noise_cache;
    auto noise_clip = [&](std::size_t index) -> const AudioClip& {
      auto it = noise_cache.find(index);
      if (it == noise_cache.end()) {
        const auto& entry = noise_manifest.entries[index];
        AudioClip clip = read_wav(entry.audio_path);
        clip.id = entry.utterance_id;
        it = noise_cache.emplace(index, std::move(clip)).first;
      }
      return it->second;
    };

    CorpusBuildResult result;
    for (const auto& entry : clean_manifest.entries) {
      try {
        Rng rng(derive_seed(options.seed, "mix/" + entry.utterance_id));
        const auto noise_index = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(noise_manifest.size()) - 1));
        const int snr = sample_snr(rng, options.snr_min, options.snr_max);
        const std::uint64_t mix_seed = rng.next();

        AudioClip clean = read_wav(entry.audio_path);
        clean.id = entry.utterance_id;
        NoisyPair pair = mix_at_snr(clean, noise_clip(noise_index), snr, mix_seed);

        const fs::path noisy_path = out_dir / "noisy" / (entry.utterance_id + ".wav");
        const fs::path clean_path = out_dir / "clean" / (entry.utterance_id + ".wav");
        write_wav(noisy_path, pair.noisy);
        write_wav(clean_path, pair.clean);

        ManifestEntry out;
        out.utterance_id = entry.utterance_id;
        out.audio_path = noisy_path;
        out.duration_seconds = pair.noisy.duration_seconds();
        out.transcript = entry.transcript;
        out.role = Role::Noisy;
        out.clean_path = clean_path;
        out.snr_db = pair.snr_db;
        out.noise_id = pair.noise_id;
        out.seed = mix_seed;
        result.manifest.entries.push_back(std::move(out));
      } catch (const Error& e) {
        result.errors.push_back({entry.utterance_id, e.code(), e.what()});
      }
    }
    save_manifest(result.manifest, out_dir / "noisy.jsonl");
    return result;
  }

  double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
      fail(ErrorKind::Data, "LengthMismatch", "pearson requires equal, non-empty sequences");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double da = a[i] - ma;
      const double db = b[i] - mb;
      sab += da * db;
      saa += da * da;
      sbb += db * db;
    }
    if (!(saa > 0.0) || !(sbb > 0.0))
      fail(ErrorKind::Data, "DegenerateChannel", "zero-variance channel");
    return sab / std::sqrt(saa * sbb);
  }

  namespace {
    void validate_recording(const MultiChannelRecording& rec) {
      if (rec.channels.size() < 2)
        fail(ErrorKind::Data, "InvalidRecording", "need at least two channels in '" + rec.id + "'");
      for (const auto& ch : rec.channels)
        if (ch.size() != rec.channels.front().size() || ch.sample_rate != rec.channels.front().sample_rate)
          fail(ErrorKind::Data, "InvalidRecording", "channels of '" + rec.id + "' differ in length or rate");
    }

    std::vector<std::vector<double>> correlation_matrix(const MultiChannelRecording& rec) {
      const std::size_t n = rec.channels.size();
      std::vector<std::vector<double>> r(n, std::vector<double>(n, 1.0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          r[i][j] = r[j][i] = pearson(rec.channels[i].samples, rec.channels[j].samples);
      return r;
    }
  }

  std::size_t select_reference_channel(const MultiChannelRecording& rec) {
    validate_recording(rec);
    const auto r = correlation_matrix(rec);
    std::size_t best = 0;
    double best_sum = -INFINITY;
    for (std::size_t i = 0; i < r.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j)
        if (j != i)
          s += r[i][j];
      if (s > best_sum) {
        best_sum = s;
        best = i;
      }
    }
    return best;
  }

  std::vector<std::size_t> select_top_correlated(const MultiChannelRecording& rec, std::size_t reference, std::size_t k) {
    validate_recording(rec);
    if (reference >= rec.channels.size())
      fail(ErrorKind::Usage, "BadArgument", "reference channel out of range");
    if (k >= rec.channels.size())
      fail(ErrorKind::Usage, "BadArgument", "k must be smaller than the channel count");
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t j = 0; j < rec.channels.size(); ++j)
      if (j != reference)
        scored.emplace_back(pearson(rec.channels[reference].samples, rec.channels[j].samples), j);
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i)
      out.push_back(scored[i].second);
    return out;
  }

}
