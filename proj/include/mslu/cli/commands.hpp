#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mslu/cli/run_config.hpp"

namespace mslu::cli {

struct Session {
  RunConfig config;
  std::size_t threads = 1;
  std::ostream* log = nullptr;  // progress lines; silent when null
  std::string invocation;       // command line, echoed into config.lock
};

// base/<YYYYmmdd-HHMMSS>[-N] unless overwrite, in which case base itself.
std::filesystem::path prepare_out_dir(const std::filesystem::path& base, bool overwrite);

// Resolved config, command and thread count.
void write_lock(const std::filesystem::path& dir, const std::string& command, const Session& session);

struct SynthArgs {
  std::filesystem::path grammar, out;
  std::size_t n = 100;
  std::size_t valid = 0, test = 0;  // taken from the end of the corpus into valid/test manifests
  bool overwrite = false;
};
// manifest.jsonl (all), train.jsonl, plus valid.jsonl / test.jsonl when asked.
std::filesystem::path cmd_synth(const SynthArgs& args, const Session& session);

struct PretrainArgs {
  std::filesystem::path train, valid, out;
  std::optional<std::filesystem::path> resume;  // earlier pretrain output directory
  bool overwrite = false;
};
// last.ckpt, best.ckpt and metrics.jsonl (one line per epoch).
std::filesystem::path cmd_pretrain(const PretrainArgs& args, const Session& session);

struct SluArgs {
  std::filesystem::path train, checkpoint, schema, out;
  std::optional<std::filesystem::path> valid, test;
  std::size_t per_class = 0;  // 0: every training utterance
  bool overwrite = false;
};
// slu.ckpt, epochs.jsonl and, with a test split, report.json.
std::filesystem::path cmd_train_slu(const SluArgs& args, const Session& session);

struct FinetuneArgs {
  std::filesystem::path train, checkpoint, out;
  std::optional<std::filesystem::path> valid, test, schema;
  std::optional<std::string> unfreeze;  // config value when unset
  bool allow_encoder = false;
  bool overwrite = false;
};
// finetuned.ckpt, epochs.jsonl and, with a test split, report.json.
std::filesystem::path cmd_finetune(const FinetuneArgs& args, const Session& session);

struct EvalArgs {
  std::filesystem::path manifest, checkpoint;
  std::optional<std::filesystem::path> out, schema;
  bool overwrite = false;
};
// Prints the report JSON; report.json when out is set.
Json cmd_eval(const EvalArgs& args, const Session& session, std::ostream& out);

struct CurveArgs {
  std::filesystem::path train, test, checkpoint, out;
  std::optional<std::filesystem::path> schema;  // the checkpoint's when unset
  std::optional<std::vector<std::size_t>> sizes;
  bool overwrite = false;
};
std::filesystem::path cmd_curve(const CurveArgs& args, const Session& session);

struct ExportArgs {
  std::string what;  // "embeddings" or "attention"
  std::filesystem::path manifest, checkpoint, out;
  std::optional<std::string> layer;
  std::vector<std::string> utterances;  // attention: every utterance when empty
  bool overwrite = false;
};
std::filesystem::path cmd_export(const ExportArgs& args, const Session& session);

struct DecodeArgs {
  std::filesystem::path checkpoint, audio;
};
// Greedy CTC text, confidences and the mask-predict refinement.
Json cmd_decode(const DecodeArgs& args, const Session& session, std::ostream& out);

// 2 config, 3 data, 4 anything else.
int exit_code_for(const std::exception& e);

}  // namespace mslu::cli
