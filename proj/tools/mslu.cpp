#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "mslu/cli/commands.hpp"
#include "mslu/error.hpp"

using namespace mslu;
using namespace mslu::cli;

namespace {

struct Common {
  std::string config;
  std::size_t threads = 0;
  bool deterministic = false;
  bool overwrite = false;
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c, bool has_out = true) {
  sub->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--threads", c.threads, "worker threads (default: hardware concurrency)");
  sub->add_flag("--deterministic", c.deterministic, "single-threaded, bit-exact run");
  if (has_out) sub->add_flag("--overwrite", c.overwrite, "write into --out itself instead of a timestamped subdirectory");
  sub->add_flag("-q,--quiet", c.quiet, "no progress output");
  sub->allow_extras();
  sub->footer("Any config field can be overridden as --section.field VALUE (e.g. --pretrain.epochs 20).");
}

// "--a.b=v" or "--a.b v".
std::vector<std::pair<std::string, std::string>> dotted_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& a = extras[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    auto key = a.substr(2);
    const auto eq = key.find('=');
    std::string value;
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("missing value for --" + key);
      value = extras[++i];
    }
    if (key.find('.') == std::string::npos && key != "seed" && key != "unfreeze") {
      throw ConfigError("unknown option --" + key);
    }
    out.emplace_back(key, value);
  }
  return out;
}

Session session(const Common& c, CLI::App* sub, int argc, char** argv) {
  Session s;
  std::optional<std::filesystem::path> file;
  if (!c.config.empty()) file = c.config;
  s.config = resolve_config(file, dotted_overrides(sub->remaining()));
  s.threads = c.deterministic ? 1 : (c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency()));
  if (!c.quiet) s.log = &std::cerr;
  for (int i = 0; i < argc; ++i) s.invocation += (i ? " " : "") + std::string(argv[i]);
  return s;
}

std::optional<std::filesystem::path> optional_path(const std::string& p) {
  if (p.empty()) return std::nullopt;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-to-intent pipeline: synthetic data, hybrid CTC/MLM pretraining, SLU head, evaluation."};
  app.require_subcommand(1);
  Common common;

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic spoken-command corpus");
  c_synth->add_option("--grammar", synth.grammar, "command grammar")->required();
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--n", synth.n, "number of utterances")->required();
  c_synth->add_option("--valid", synth.valid, "utterances held out as valid.jsonl");
  c_synth->add_option("--test", synth.test, "utterances held out as test.jsonl");
  add_common(c_synth, common);

  PretrainArgs pre;
  std::string resume;
  auto* c_pre = app.add_subcommand("pretrain", "hybrid CTC + MLM pretraining of the encoder-decoder");
  c_pre->add_option("--train", pre.train, "training manifest")->required();
  c_pre->add_option("--valid", pre.valid, "validation manifest")->required();
  c_pre->add_option("--out", pre.out, "output directory");
  c_pre->add_option("--resume", resume, "continue an earlier pretrain output directory");
  add_common(c_pre, common);

  SluArgs sl;
  std::string sl_valid, sl_test;
  auto* c_slu = app.add_subcommand("train-slu", "train the SLU head on frozen representations");
  c_slu->add_option("--manifest,--train", sl.train, "training manifest")->required();
  c_slu->add_option("--valid", sl_valid, "validation manifest (model selection)");
  c_slu->add_option("--test", sl_test, "test manifest (report.json)");
  c_slu->add_option("--checkpoint", sl.checkpoint, "pretrained checkpoint")->required();
  c_slu->add_option("--schema", sl.schema, "command grammar defining the label schema")->required();
  c_slu->add_option("--per-class", sl.per_class, "training examples per intent class (0: all)");
  c_slu->add_option("--out", sl.out, "output directory")->required();
  add_common(c_slu, common);

  FinetuneArgs ft;
  std::string ft_valid, ft_test, ft_schema, ft_unfreeze;
  auto* c_ft = app.add_subcommand("finetune", "fine-tune the head together with part of the backbone");
  c_ft->add_option("--manifest,--train", ft.train, "training manifest")->required();
  c_ft->add_option("--valid", ft_valid, "validation manifest");
  c_ft->add_option("--test", ft_test, "test manifest");
  c_ft->add_option("--checkpoint", ft.checkpoint, "checkpoint from train-slu")->required();
  c_ft->add_option("--schema", ft_schema, "grammar that must match the checkpoint's schema");
  c_ft->add_option("--unfreeze", ft_unfreeze, "decoder_lastK, decoder, ctc, encoder (comma list)");
  c_ft->add_flag("--i-know", ft.allow_encoder, "allow unfreezing the encoder");
  c_ft->add_option("--out", ft.out, "output directory")->required();
  add_common(c_ft, common);

  EvalArgs ev;
  std::string ev_out, ev_schema;
  auto* c_eval = app.add_subcommand("eval", "evaluate an SLU checkpoint on a manifest");
  c_eval->add_option("--manifest", ev.manifest, "manifest to score")->required();
  c_eval->add_option("--checkpoint", ev.checkpoint, "SLU checkpoint")->required();
  c_eval->add_option("--schema", ev_schema, "grammar that must match the checkpoint's schema");
  c_eval->add_option("--out", ev_out, "also write report.json here");
  add_common(c_eval, common);

  CurveArgs cu;
  std::string cu_sizes, cu_schema;
  auto* c_curve = app.add_subcommand("curve", "low-resource learning curve on frozen representations");
  c_curve->add_option("--train", cu.train, "pool to sample training subsets from")->required();
  c_curve->add_option("--test", cu.test, "fixed test manifest")->required();
  c_curve->add_option("--checkpoint", cu.checkpoint, "pretrained or SLU checkpoint")->required();
  c_curve->add_option("--schema", cu_schema, "command grammar");
  c_curve->add_option("--sizes", cu_sizes, "examples per class, comma separated (e.g. 1,2,4,8,16)");
  c_curve->add_option("--out", cu.out, "output directory")->required();
  add_common(c_curve, common);

  ExportArgs ex;
  auto* c_export = app.add_subcommand("export", "export embeddings or attention maps");
  c_export->add_option("what", ex.what, "embeddings | attention")->required();
  c_export->add_option("--manifest", ex.manifest, "utterances to export")->required();
  c_export->add_option("--checkpoint", ex.checkpoint, "checkpoint")->required();
  c_export->add_option("--layer", ex.layer, "representation layer (encoder.N, decoder.N, decoder.penultimate)");
  c_export->add_option("--utterance", ex.utterances, "utterance ids (attention: default all)");
  c_export->add_option("--out", ex.out, "output directory")->required();
  add_common(c_export, common);

  DecodeArgs de;
  auto* c_decode = app.add_subcommand("decode", "transcribe one audio file");
  c_decode->add_option("--checkpoint", de.checkpoint, "checkpoint")->required();
  c_decode->add_option("--audio", de.audio, "WAV file")->required();
  add_common(c_decode, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const auto s = session(common, sub, argc, argv);
    synth.overwrite = pre.overwrite = sl.overwrite = ft.overwrite = ev.overwrite = cu.overwrite = ex.overwrite =
        common.overwrite;
    if (sub == c_synth) {
      std::cout << cmd_synth(synth, s).string() << "\n";
    } else if (sub == c_pre) {
      pre.resume = optional_path(resume);
      if (!pre.resume && pre.out.empty()) throw ConfigError("pretrain: --out or --resume is required");
      if (pre.resume && !pre.out.empty()) throw ConfigError("pretrain: --resume writes into its own directory; drop --out");
      std::cout << cmd_pretrain(pre, s).string() << "\n";
    } else if (sub == c_slu) {
      sl.valid = optional_path(sl_valid);
      sl.test = optional_path(sl_test);
      std::cout << cmd_train_slu(sl, s).string() << "\n";
    } else if (sub == c_ft) {
      ft.valid = optional_path(ft_valid);
      ft.test = optional_path(ft_test);
      ft.schema = optional_path(ft_schema);
      if (!ft_unfreeze.empty()) ft.unfreeze = ft_unfreeze;
      std::cout << cmd_finetune(ft, s).string() << "\n";
    } else if (sub == c_eval) {
      ev.out = optional_path(ev_out);
      ev.schema = optional_path(ev_schema);
      cmd_eval(ev, s, std::cout);
    } else if (sub == c_curve) {
      cu.schema = optional_path(cu_schema);
      if (!cu_sizes.empty()) cu.sizes = parse_size_list(cu_sizes);
      std::cout << cmd_curve(cu, s).string() << "\n";
    } else if (sub == c_export) {
      std::cout << cmd_export(ex, s).string() << "\n";
    } else if (sub == c_decode) {
      cmd_decode(de, s, std::cout);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
