#include "mslu/cli/commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mslu/decoder/mask_predict.hpp"
#include "mslu/error.hpp"
#include "mslu/eval/curve.hpp"
#include "mslu/eval/export.hpp"
#include "mslu/eval/report.hpp"
#include "mslu/features/audio.hpp"
#include "mslu/features/synth.hpp"
#include "mslu/train/trainer.hpp"

namespace mslu::cli {

namespace fs = std::filesystem;

namespace {

void note(const Session& s, const std::string& line) {
  if (s.log) *s.log << line << std::endl;
}

void write_text(const fs::path& path, const std::string& text, bool append = false) {
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::vector<features::ManifestEntry> manifest(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("manifest not found: " + path.string());
  return features::read_manifest(path);
}

// Utterances normalized with the bundle's statistics.
std::vector<train::Utterance> load_split(const fs::path& path, const train::SpeechBundle& bundle,
                                         const Session& s) {
  auto utts = train::load_utterances(manifest(path), bundle.features, s.threads);
  train::normalize(utts, bundle.stats);
  return utts;
}

train::Checkpoint checkpoint(const fs::path& path, bool need_slu) {
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
  auto c = train::load_checkpoint(path);
  if (!c.speech) throw DataError(path.string() + " holds no speech model");
  if (need_slu && !c.slu) throw DataError(path.string() + " holds no SLU head");
  return c;
}

slu::IntentSchema grammar_schema(const fs::path& path) {
  return slu::schema_from_grammar(features::load_grammar(path));
}

void check_schema(const slu::IntentSchema& have, const std::optional<fs::path>& wanted) {
  if (!wanted) return;
  const auto other = grammar_schema(*wanted);
  if (other.bits != have.bits || other.valid_set != have.valid_set) {
    throw ConfigError("schema mismatch: " + wanted->string() + " differs from the checkpoint's schema");
  }
}

slu::SluConfig head_config(const RunConfig& cfg, const train::SpeechBundle& bundle, const slu::IntentSchema& schema) {
  auto h = cfg.head;
  h.input_dim = bundle.model.config.d_model;
  h.bits = schema.size();
  h.validate();
  return h;
}

std::vector<slu::Multihot> targets(const std::vector<train::Utterance>& utts, const slu::IntentSchema& schema) {
  std::vector<slu::Multihot> out;
  for (const auto& u : utts) out.push_back(slu::encode_intent(u.intent, schema));
  return out;
}

std::vector<train::SluExample> slu_examples(const std::vector<decoder::RepresentationSequence>& reprs,
                                            const std::vector<slu::Multihot>& labels) {
  std::vector<train::SluExample> out;
  for (std::size_t i = 0; i < reprs.size(); ++i) out.push_back({&reprs[i], labels[i]});
  return out;
}

std::vector<const decoder::RepresentationSequence*> views(const std::vector<decoder::RepresentationSequence>& r) {
  std::vector<const decoder::RepresentationSequence*> out;
  for (const auto& x : r) out.push_back(&x);
  return out;
}

Json epoch_json(const train::SluEpoch& e) {
  return {{"epoch", e.epoch},
          {"loss", e.loss},
          {"valid_accuracy", e.valid_accuracy},
          {"valid_loss", e.valid_loss},
          {"improved", e.improved},
          {"seconds", e.seconds}};
}

std::string summary(const eval::EvalReport& r) {
  std::string s = "accuracy " + fixed(r.accuracy) + ", micro-F1 " + fixed(r.micro_f1);
  if (r.ter) s += ", TER " + fixed(*r.ter);
  return s + " on " + std::to_string(r.count) + " utterances";
}

std::string token_string(const ctc::Vocabulary& vocab, const std::vector<int>& ids) {
  return features::join_tokens(vocab.decode(ids));
}

}  // namespace

fs::path prepare_out_dir(const fs::path& base, bool overwrite) {
  fs::path dir = base;
  if (!overwrite) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream stamp;
    stamp << std::put_time(&tm, "%Y%m%d-%H%M%S");
    dir = base / stamp.str();
    for (int k = 1; fs::exists(dir); ++k) dir = base / (stamp.str() + "-" + std::to_string(k));
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  return dir;
}

void write_lock(const fs::path& dir, const std::string& command, const Session& session) {
  write_json(dir / "config.lock",
             {{"command", command}, {"invocation", session.invocation}, {"threads", session.threads},
              {"config", to_json(session.config)}});
}

fs::path cmd_synth(const SynthArgs& args, const Session& s) {
  const auto& cfg = s.config;
  const auto grammar = features::load_grammar(args.grammar);
  if (args.valid + args.test >= args.n) throw ConfigError("synth: valid + test must leave training utterances");
  auto spec = features::make_synth_spec(grammar.terminals(), cfg.seed, cfg.synth.token_duration_ms,
                                        cfg.synth.noise_snr_db);
  spec.speakers = cfg.synth.speakers;
  spec.sample_rate_hz = cfg.features.sample_rate_hz;
  spec.validate();
  const auto dir = prepare_out_dir(args.out, args.overwrite);
  write_lock(dir, "synth", s);
  const auto result = features::synth_corpus(grammar, spec, args.n, cfg.seed, dir);
  auto entries = features::read_manifest(result.manifest);
  const std::size_t n_train = args.n - args.valid - args.test;
  auto slice = [&](std::size_t from, std::size_t to) {
    return std::vector<features::ManifestEntry>(entries.begin() + from, entries.begin() + to);
  };
  features::write_manifest(dir / "train.jsonl", slice(0, n_train));
  if (args.valid) features::write_manifest(dir / "valid.jsonl", slice(n_train, n_train + args.valid));
  if (args.test) features::write_manifest(dir / "test.jsonl", slice(n_train + args.valid, args.n));
  note(s, "wrote " + std::to_string(result.utterances) + " utterances to " + dir.string());
  return dir;
}

fs::path cmd_pretrain(const PretrainArgs& args, const Session& s) {
  const auto cfg = s.config.stage(s.config.pretrain);
  train::Checkpoint start, best;
  fs::path dir;
  if (args.resume) {
    dir = *args.resume;
    const auto lock_path = dir / "config.lock";
    if (!fs::exists(lock_path)) throw DataError("resume: no config.lock in " + dir.string());
    std::ifstream lf(lock_path);
    Json lock = Json::parse(lf, nullptr, false);
    if (lock.is_discarded() || !lock.contains("config")) throw FormatError("resume: unreadable " + lock_path.string());
    auto before = lock["config"], now = to_json(s.config);
    before["pretrain"].erase("epochs");
    now["pretrain"].erase("epochs");
    if (before != now) throw ConfigError("resume conflicts with " + lock_path.string() + " (only pretrain.epochs may change)");
    start = checkpoint(dir / "last.ckpt", false);
    best = checkpoint(dir / "best.ckpt", false);
    start.train = cfg;
  }

  auto train_entries = manifest(args.train);
  const auto valid_entries = manifest(args.valid);
  note(s, "loading " + std::to_string(train_entries.size()) + " + " + std::to_string(valid_entries.size()) +
              " utterances");
  auto train_utts = train::load_utterances(train_entries, s.config.features, s.threads);
  auto valid_utts = train::load_utterances(valid_entries, s.config.features, s.threads);
  if (!args.resume) {
    std::vector<std::vector<std::string>> words;
    for (const auto& u : train_utts) words.push_back(u.words);
    auto vocab = ctc::Vocabulary::from_corpus(words);
    if (vocab.size() <= ctc::Vocabulary::kReserved) throw DataError("pretrain: the training transcripts hold no words");
    start.speech = train::make_speech_bundle(s.config.model, std::move(vocab), s.config.features,
                                             train::feature_stats(train_utts), s.config.seed);
    start.train = cfg;
    dir = prepare_out_dir(args.out, args.overwrite);
  }
  train::normalize(train_utts, start.speech->stats);
  train::normalize(valid_utts, start.speech->stats);
  write_lock(dir, "pretrain", s);
  note(s, "model: " + std::to_string(nn::parameter_count(start.speech->model.parameters())) + " parameters, vocab " +
              std::to_string(start.speech->vocab.size()));

  train::PretrainOptions opt;
  opt.out_dir = dir;
  if (args.resume) opt.resume_best = &best;
  opt.on_epoch = [&](const train::EpochMetrics& m) {
    const Json line{{"epoch", m.epoch},   {"step", m.step},         {"loss", m.loss},
                    {"ctc_loss", m.ctc_loss}, {"mlm_loss", m.mlm_loss}, {"ter", m.ter},
                    {"lr", m.lr},         {"rho", cfg.rho},         {"ctc_skipped", m.ctc_skipped},
                    {"steps_skipped", m.steps_skipped}, {"improved", m.improved}, {"seconds", m.seconds}};
    write_text(dir / "metrics.jsonl", line.dump() + "\n", true);
    note(s, "epoch " + std::to_string(m.epoch) + ": loss " + fixed(m.loss) + ", valid TER " + fixed(m.ter) +
                ", lr " + fixed(m.lr, 6) + (m.improved ? " *" : ""));
  };
  train::pretrain(std::move(start), train_utts, valid_utts, cfg, opt);
  return dir;
}

fs::path cmd_train_slu(const SluArgs& args, const Session& s) {
  auto ckpt = checkpoint(args.checkpoint, false);
  const auto& bundle = *ckpt.speech;
  const auto schema = grammar_schema(args.schema);
  const auto cfg = s.config.stage(s.config.slu);
  const auto head_cfg = head_config(s.config, bundle, schema);

  auto train_utts = load_split(args.train, bundle, s);
  auto train_labels = targets(train_utts, schema);
  if (args.per_class > 0) {
    auto rng = train::substream(cfg.seed, train::kData, args.per_class);
    bool short_class = false;
    const auto keep = eval::sample_per_class(train_labels, schema, args.per_class, rng, true, &short_class);
    std::vector<train::Utterance> u;
    std::vector<slu::Multihot> l;
    for (auto i : keep) {
      u.push_back(std::move(train_utts[i]));
      l.push_back(train_labels[i]);
    }
    train_utts = std::move(u);
    train_labels = std::move(l);
    if (short_class) note(s, "warning: some class has fewer than " + std::to_string(args.per_class) + " examples");
  }
  std::vector<train::Utterance> valid_utts, test_utts;
  if (args.valid) valid_utts = load_split(*args.valid, bundle, s);
  if (args.test) test_utts = load_split(*args.test, bundle, s);

  const auto& rep = s.config.representation;
  note(s, "extracting " + rep.layer + " representations");
  const auto train_reprs = train::extract_all(bundle.model, train_utts, rep);
  const auto valid_reprs = train::extract_all(bundle.model, valid_utts, rep);
  const auto dir = prepare_out_dir(args.out, args.overwrite);
  write_lock(dir, "train-slu", s);

  slu::SluHead<float> head(head_cfg, train::substream(cfg.seed, train::kInit, 1)());
  const auto result = train::train_slu(
      head, slu_examples(train_reprs, train_labels), slu_examples(valid_reprs, targets(valid_utts, schema)), schema,
      cfg, [&](const train::SluEpoch& e) {
        write_text(dir / "epochs.jsonl", epoch_json(e).dump() + "\n", true);
        if (e.improved) note(s, "epoch " + std::to_string(e.epoch) + ": valid accuracy " + fixed(e.valid_accuracy));
      });

  ckpt.slu = train::SluBundle{head, schema, rep};
  ckpt.train = cfg;
  ckpt.state = {};
  ckpt.optimizer = {};
  ckpt.metrics = {{"best_epoch", result.best_epoch}, {"best_accuracy", result.best_accuracy},
                  {"train_utterances", train_utts.size()}};
  train::save_checkpoint(dir / "slu.ckpt", ckpt);
  if (!test_utts.empty()) {
    const auto test_reprs = train::extract_all(bundle.model, test_utts, rep);
    auto report = eval::evaluate(head, views(test_reprs), targets(test_utts, schema), schema);
    report.ter = train::validation_ter(bundle, test_utts);
    write_json(dir / "report.json", eval::to_json(report));
    note(s, "test: " + summary(report));
  }
  return dir;
}

fs::path cmd_finetune(const FinetuneArgs& args, const Session& s) {
  auto ckpt = checkpoint(args.checkpoint, true);
  auto& bundle = *ckpt.speech;
  auto& sb = *ckpt.slu;
  check_schema(sb.schema, args.schema);
  if (sb.extract.refine) throw ConfigError("finetune: representations with refine are not supported");
  const auto cfg = s.config.stage(s.config.finetune);
  const auto spec = args.unfreeze.value_or(s.config.unfreeze);
  if (spec.find("encoder") != std::string::npos && !args.allow_encoder) {
    throw ConfigError("--unfreeze encoder degrades the pretrained encoder; pass --i-know to do it anyway");
  }
  const auto trainable = train::unfreeze_prefixes(spec, bundle.model.config, args.allow_encoder);
  const bool run_encoder = train::has_prefix("encoder", trainable);

  const auto train_utts = load_split(args.train, bundle, s);
  std::vector<train::Utterance> valid_utts, test_utts;
  if (args.valid) valid_utts = load_split(*args.valid, bundle, s);
  if (args.test) test_utts = load_split(*args.test, bundle, s);
  const auto threshold = sb.extract.threshold;
  const auto train_ex = train::prepare_finetune(bundle.model, train_utts, sb.schema, threshold);
  const auto valid_ex = train::prepare_finetune(bundle.model, valid_utts, sb.schema, threshold);
  const auto test_ex = train::prepare_finetune(bundle.model, test_utts, sb.schema, threshold);

  const auto dir = prepare_out_dir(args.out, args.overwrite);
  write_lock(dir, "finetune", s);
  std::string joined;
  for (const auto& p : trainable) joined += (joined.empty() ? "" : ", ") + p;
  note(s, "trainable: " + joined);
  const auto result = train::finetune(bundle.model, sb.head, sb.extract.layer, train_ex, valid_ex, sb.schema, cfg,
                                      trainable, [&](const train::SluEpoch& e) {
                                        write_text(dir / "epochs.jsonl", epoch_json(e).dump() + "\n", true);
                                        note(s, "epoch " + std::to_string(e.epoch) + ": loss " + fixed(e.loss) +
                                                    ", valid accuracy " + fixed(e.valid_accuracy));
                                      });
  ckpt.train = cfg;
  ckpt.state = {};
  ckpt.optimizer = {};
  ckpt.metrics = {{"best_epoch", result.best_epoch}, {"best_accuracy", result.best_accuracy}, {"unfreeze", spec}};
  train::save_checkpoint(dir / "finetuned.ckpt", ckpt);
  if (!test_ex.empty()) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto preds =
        train::finetune_predict(bundle.model, sb.head, sb.extract.layer, test_ex, sb.schema, run_encoder);
    auto report = eval::make_report(preds, targets(test_utts, sb.schema), sb.schema);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.ter = train::validation_ter(bundle, test_utts);
    write_json(dir / "report.json", eval::to_json(report));
    note(s, "test: " + summary(report));
  }
  return dir;
}

Json cmd_eval(const EvalArgs& args, const Session& s, std::ostream& out) {
  const auto ckpt = checkpoint(args.checkpoint, true);
  const auto& bundle = *ckpt.speech;
  const auto& sb = *ckpt.slu;
  check_schema(sb.schema, args.schema);
  const auto utts = load_split(args.manifest, bundle, s);
  const auto t0 = std::chrono::steady_clock::now();
  const auto reprs = train::extract_all(bundle.model, utts, sb.extract);
  auto report = eval::evaluate(sb.head, views(reprs), targets(utts, sb.schema), sb.schema);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.ter = train::validation_ter(bundle, utts);
  const auto j = eval::to_json(report);
  if (args.out) {
    const auto dir = prepare_out_dir(*args.out, args.overwrite);
    write_lock(dir, "eval", s);
    write_json(dir / "report.json", j);
  }
  note(s, summary(report));
  out << j.dump(2) << "\n";
  return j;
}

fs::path cmd_curve(const CurveArgs& args, const Session& s) {
  const auto ckpt = checkpoint(args.checkpoint, false);
  const auto& bundle = *ckpt.speech;
  slu::IntentSchema schema;
  if (args.schema) {
    schema = grammar_schema(*args.schema);
    if (ckpt.slu) check_schema(ckpt.slu->schema, args.schema);
  } else if (ckpt.slu) {
    schema = ckpt.slu->schema;
  } else {
    throw ConfigError("curve: pass --schema for a checkpoint without an SLU head");
  }
  const auto& rep = s.config.representation;
  const auto pool_utts = load_split(args.train, bundle, s);
  const auto test_utts = load_split(args.test, bundle, s);
  const auto pool_reprs = train::extract_all(bundle.model, pool_utts, rep);
  const auto test_reprs = train::extract_all(bundle.model, test_utts, rep);
  auto examples = [&](const std::vector<train::Utterance>& u, const std::vector<decoder::RepresentationSequence>& r) {
    std::vector<eval::CurveExample> out;
    for (std::size_t i = 0; i < u.size(); ++i) out.push_back({u[i].id, &r[i], slu::encode_intent(u[i].intent, schema)});
    return out;
  };

  eval::CurveOptions o;
  o.sizes = args.sizes.value_or(s.config.curve.sizes);
  o.repeats = s.config.curve.repeats;
  o.seed = s.config.seed;
  o.per_combination = s.config.curve.per_combination;
  o.head = head_config(s.config, bundle, schema);
  o.train = s.config.stage(s.config.slu);
  o.threads = s.threads;
  const auto dir = prepare_out_dir(args.out, args.overwrite);
  write_lock(dir, "curve", s);
  const auto result = eval::learning_curve(examples(pool_utts, pool_reprs), examples(test_utts, test_reprs), schema,
                                           o, [&](const std::string& m) { note(s, m); });
  eval::write_curve(dir, result, o);
  return dir;
}

fs::path cmd_export(const ExportArgs& args, const Session& s) {
  if (args.what != "embeddings" && args.what != "attention") {
    throw ConfigError("export: expected 'embeddings' or 'attention', got '" + args.what + "'");
  }
  const bool attention = args.what == "attention";
  const auto ckpt = checkpoint(args.checkpoint, attention);
  const auto& bundle = *ckpt.speech;
  auto rep = attention ? ckpt.slu->extract : s.config.representation;
  if (args.layer) {
    if (attention && *args.layer != rep.layer) throw ConfigError("export attention: the head was trained on " + rep.layer);
    rep.layer = *args.layer;
  }
  decoder::parse_layer(rep.layer, bundle.model.config);

  auto utts = load_split(args.manifest, bundle, s);
  if (!args.utterances.empty()) {
    std::vector<train::Utterance> picked;
    for (const auto& id : args.utterances) {
      auto it = std::find_if(utts.begin(), utts.end(), [&](const train::Utterance& u) { return u.id == id; });
      if (it == utts.end()) throw DataError("export: utterance " + id + " is not in the manifest");
      picked.push_back(*it);
    }
    utts = std::move(picked);
  }
  const auto reprs = train::extract_all(bundle.model, utts, rep);
  const auto dir = prepare_out_dir(args.out, args.overwrite);
  write_lock(dir, "export", s);
  if (attention) {
    for (std::size_t i = 0; i < utts.size(); ++i) {
      const auto r = eval::attention_report(ckpt.slu->head, reprs[i], bundle.vocab, ckpt.slu->schema, utts[i].id);
      write_json(dir / ("attention_" + utts[i].id + ".json"), eval::to_json(r));
      write_text(dir / ("attention_" + utts[i].id + ".svg"), eval::attention_svg(r));
    }
    note(s, "wrote attention maps for " + std::to_string(utts.size()) + " utterances");
  } else {
    std::vector<eval::EmbeddingRecord> records;
    for (std::size_t i = 0; i < utts.size(); ++i) {
      records.push_back({utts[i].id, &reprs[i], token_string(bundle.vocab, reprs[i].tokens),
                         eval::command_name(utts[i].intent)});
    }
    eval::export_embeddings(dir / "embeddings.arc", dir / "embeddings.json", records);
    note(s, "wrote " + std::to_string(records.size()) + " " + rep.layer + " embeddings");
  }
  return dir;
}

Json cmd_decode(const DecodeArgs& args, const Session& s, std::ostream& out) {
  const auto ckpt = checkpoint(args.checkpoint, false);
  const auto& bundle = *ckpt.speech;
  auto feats = features::log_mel(features::load_audio(args.audio), bundle.features);
  bundle.stats.apply(feats);

  nn::NoGradGuard guard;
  const auto fb = decoder::collate<float>({&feats});
  const auto enc = bundle.model.encode(fb.features, fb.lengths, {});
  const double threshold = ckpt.slu ? ckpt.slu->extract.threshold : s.config.representation.threshold;
  const auto tmpl = decoder::build_templates(bundle.model, enc, threshold)[0];
  const auto refined = tmpl.hyp.mask_count() > 0
                           ? decoder::mask_predict(tmpl.hyp, decoder::model_predictor(bundle.model, enc),
                                                   s.config.representation.max_iter)
                                 .tokens
                           : tmpl.hyp.tokens;
  const auto lp = bundle.model.ctc_log_probs(enc);
  const auto h = ctc::greedy_decode<float>(lp.data(), enc.lengths[0], lp.dim(2));

  Json j{{"greedy", token_string(bundle.vocab, h.tokens)},
         {"confidence", h.confidence},
         {"template", token_string(bundle.vocab, tmpl.hyp.tokens)},
         {"refined", token_string(bundle.vocab, refined)},
         {"empty_decode", tmpl.fallback}};
  if (ckpt.slu) {
    const auto reprs = decoder::extract_representations(bundle.model, {&feats}, ckpt.slu->extract);
    const auto pred = train::predict_intents(ckpt.slu->head, {&reprs[0]}, ckpt.slu->schema);
    j["intent"] = eval::command_name(pred[0].command);
  }
  out << "greedy:     " << j["greedy"].get<std::string>() << "\n";
  out << "confidence:";
  for (double c : h.confidence) out << " " << fixed(c, 3);
  out << "\n";
  out << "refined:    " << j["refined"].get<std::string>() << "\n";
  if (j.contains("intent")) out << "intent:     " << j["intent"].get<std::string>() << "\n";
  return j;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  return 4;
}

}  // namespace mslu::cli
