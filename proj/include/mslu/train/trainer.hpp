#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mslu/decoder/representations.hpp"
#include "mslu/train/checkpoint.hpp"
#include "mslu/train/data.hpp"

namespace mslu::train {

// Independent generator for (seed, purpose, a, b); the same inputs always
// give the same stream.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0, std::uint64_t b = 0);

enum Purpose : std::uint64_t { kData = 1, kInit = 2, kDropout = 3, kMasking = 4 };

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // optimizer updates so far
  double loss = 0.0;      // mean hybrid loss over micro-batches
  double ctc_loss = 0.0;
  double mlm_loss = 0.0;
  double lr = 0.0;        // at the last update
  double ter = 0.0;       // validation token error rate
  std::size_t ctc_skipped = 0;    // infeasible utterances
  std::size_t steps_skipped = 0;  // updates dropped for non-finite gradients
  bool improved = false;
  double seconds = 0.0;
};

struct PretrainOptions {
  // When set: last.ckpt after every epoch, best.ckpt on improvement.
  std::filesystem::path out_dir;
  std::function<void(const EpochMetrics&)> on_epoch;
  // Hybrid loss of every micro-batch, as (step, loss).
  std::function<void(std::size_t, double)> on_batch;
  // Best parameters so far when resuming; the start checkpoint otherwise.
  const Checkpoint* resume_best = nullptr;
};

struct PretrainResult {
  Checkpoint best;  // speech bundle restored to the best validation TER
  std::vector<EpochMetrics> history;
};

struct AccumulatedLoss {
  double loss = 0.0, ctc_loss = 0.0, mlm_loss = 0.0;  // sums over micro-batches
  std::size_t ctc_skipped = 0;
};

// Backward pass of every micro-batch with its hybrid loss weighted by
// 1 / micro_batches.size(), adding into the parameter gradients: one
// optimizer update's worth. Masks come from (seed, epoch, utterance index),
// dropout from (seed, step, micro-batch index).
AccumulatedLoss accumulate_pretrain_gradients(const decoder::SpeechModel<float>& model,
                                              const std::vector<Utterance>& train,
                                              const std::vector<std::vector<int>>& targets,
                                              const std::vector<std::vector<std::size_t>>& micro_batches,
                                              const TrainConfig& config, std::size_t epoch, std::size_t step,
                                              const std::function<void(std::size_t, double)>& on_batch = {});

// Hybrid CTC + MLM pretraining from `start` (fresh or resumed; state.epoch
// counts completed epochs). `train` and `valid` must be normalized already.
// Throws DataError on an empty training set.
PretrainResult pretrain(Checkpoint start, const std::vector<Utterance>& train, const std::vector<Utterance>& valid,
                        const TrainConfig& config, const PretrainOptions& options = {});

struct Transcription {
  std::vector<int> tokens;
  std::vector<double> confidence;
};

// Greedy CTC decode of every utterance.
std::vector<Transcription> greedy_transcripts(const decoder::SpeechModel<float>& model,
                                              const std::vector<Utterance>& utterances, std::size_t batch = 32);
double validation_ter(const SpeechBundle& bundle, const std::vector<Utterance>& utterances);

std::vector<decoder::RepresentationSequence> extract_all(const decoder::SpeechModel<float>& model,
                                                         const std::vector<Utterance>& utterances,
                                                         const decoder::ExtractOptions& options,
                                                         std::size_t batch = 32);

struct SluExample {
  const decoder::RepresentationSequence* repr = nullptr;
  slu::Multihot target;
};

struct SluEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;            // mean training BCE
  double valid_accuracy = 0.0;  // after structure enforcement
  double valid_loss = 0.0;
  bool improved = false;
  double seconds = 0.0;
};

struct SluTrainResult {
  std::vector<SluEpoch> history;
  double best_accuracy = 0.0;
  double best_loss = 0.0;
  std::size_t best_epoch = 0;  // 0: the starting parameters were never beaten
  std::size_t steps_skipped = 0;
};

// BCE training of the head on frozen representations with Adam; keeps the
// parameters of the best validation accuracy (ties: lower validation loss).
// Stops after early_stop_patience epochs with neither a better selection
// score nor a new lowest validation loss.
// An empty `valid` selects on the training set instead.
SluTrainResult train_slu(slu::SluHead<float>& head, const std::vector<SluExample>& train,
                         const std::vector<SluExample>& valid, const slu::IntentSchema& schema,
                         const TrainConfig& config, const std::function<void(const SluEpoch&)>& on_epoch = {});

std::vector<slu::IntentLabel> predict_intents(const slu::SluHead<float>& head,
                                              const std::vector<const decoder::RepresentationSequence*>& items,
                                              const slu::IntentSchema& schema, std::size_t batch = 256);

// Frozen encoder output and decoder template for one utterance.
struct FinetuneExample {
  decoder::EncodingCache enc;
  std::vector<int> tokens;
  slu::Multihot target;
  const features::FeatureSequence* features = nullptr;
};

std::vector<FinetuneExample> prepare_finetune(const decoder::SpeechModel<float>& model,
                                              const std::vector<Utterance>& utterances,
                                              const slu::IntentSchema& schema, double threshold = 0.9,
                                              std::size_t batch = 32);

// Trains every parameter of model and head whose name starts with one of
// `trainable` (see unfreeze_prefixes); everything else stays bit-identical.
// The representation layer must be a decoder layer.
SluTrainResult finetune(decoder::SpeechModel<float>& model, slu::SluHead<float>& head, const std::string& layer,
                        const std::vector<FinetuneExample>& train, const std::vector<FinetuneExample>& valid,
                        const slu::IntentSchema& schema, const TrainConfig& config,
                        const std::vector<std::string>& trainable,
                        const std::function<void(const SluEpoch&)>& on_epoch = {});

// run_encoder recomputes encoder states from features instead of the cache
// (needed once the encoder itself was trained).
std::vector<slu::IntentLabel> finetune_predict(const decoder::SpeechModel<float>& model,
                                               const slu::SluHead<float>& head, const std::string& layer,
                                               const std::vector<FinetuneExample>& items,
                                               const slu::IntentSchema& schema, bool run_encoder = false,
                                               std::size_t batch = 64);

}  // namespace mslu::train
