#include "mslu/train/data.hpp"

#include <atomic>
#include <exception>
#include <thread>

#include "mslu/features/audio.hpp"

namespace mslu::train {

std::vector<Utterance> load_utterances(const std::vector<features::ManifestEntry>& entries,
                                       const features::FeatureConfig& config, std::size_t threads) {
  std::vector<Utterance> out(entries.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  const auto work = [&] {
    for (std::size_t i = next++; i < entries.size() && !failed; i = next++) {
      try {
        const auto& e = entries[i];
        out[i].id = e.id;
        out[i].words = e.tokens();
        out[i].intent = e.intent;
        out[i].features = features::log_mel(features::load_audio(e.audio), config);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, entries.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

features::FeatureStats feature_stats(const std::vector<Utterance>& utterances) {
  std::vector<features::FeatureSequence> all;
  all.reserve(utterances.size());
  for (const auto& u : utterances) all.push_back(u.features);
  return features::compute_stats(all);
}

void normalize(std::vector<Utterance>& utterances, const features::FeatureStats& stats) {
  for (auto& u : utterances) stats.apply(u.features);
}

std::vector<const features::FeatureSequence*> feature_views(const std::vector<Utterance>& utterances,
                                                            const std::vector<std::size_t>& indices) {
  std::vector<const features::FeatureSequence*> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(&utterances.at(i).features);
  return out;
}

std::vector<std::vector<int>> encode_transcripts(const std::vector<Utterance>& utterances,
                                                 const ctc::Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) out.push_back(vocab.encode(u.words));
  return out;
}

}  // namespace mslu::train
