#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <locale>
#include <optional>
#include <sstream>

#include "cli/cli.hpp"
#include "latentmark/error.hpp"
#include "latentmark/evalharness.hpp"
#include "latentmark/features.hpp"
#include "latentmark/keys.hpp"
#include "latentmark/parallel.hpp"
#include "latentmark/stats.hpp"
#include "latentmark/synthetic.hpp"
#include "latentmark/watermark.hpp"

namespace fs = std::filesystem;

namespace latentmark::cli {

namespace {

std::string num(double v) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << std::setprecision(8) << v;
  return s.str();
}

FeatureModel load_model(const std::string& weights, const std::string& whitening) {
  return FeatureModel(load_extractor(weights), load_whitening(whitening));
}

void check_dims(int key_dim, const FeatureModel& model) {
  if (key_dim != model.dim())
    throw InvalidArgument("key dimension " + std::to_string(key_dim) + " does not match feature dimension " +
                          std::to_string(model.dim()));
}

template <typename K>
K key_of_kind(const Key& key, const char* what) {
  if (const auto* k = std::get_if<K>(&key)) return *k;
  throw InvalidArgument(std::string("this command needs a ") + what + " key");
}

// "0b0110..." is a bit string, anything else is MSB-first hex with an optional 0x.
Message parse_message(const std::string& text, int k) {
  if (text.rfind("0b", 0) == 0) {
    Message m = Message::from_bits(text.substr(2));
    if (m.size() != k)
      throw InvalidArgument("message has " + std::to_string(m.size()) + " bits, key needs " + std::to_string(k));
    return m;
  }
  return Message::from_hex(text.rfind("0x", 0) == 0 ? text.substr(2) : text, k);
}

std::vector<fs::path> read_manifest_lines(const fs::path& path, std::vector<std::string>* extra = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<fs::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string file, rest;
    if (!(fields >> file)) continue;
    fields >> rest;
    fs::path p(file);
    paths.push_back(p.is_absolute() ? p : path.parent_path() / p);
    if (extra) extra->push_back(rest);
  }
  return paths;
}

std::vector<fs::path> corpus_paths(const fs::path& corpus) {
  if (!fs::exists(corpus)) throw IoError("corpus not found: " + corpus.string());
  if (!fs::is_directory(corpus)) return read_manifest_lines(corpus);
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(corpus)) {
    const auto ext = entry.path().extension();
    if (ext == ".png" || ext == ".ppm" || ext == ".pnm") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

std::vector<AttackSpec> parse_attacks(const std::string& list) {
  if (list.empty()) return default_attack_grid();
  std::vector<AttackSpec> attacks;
  std::istringstream in(list);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) attacks.push_back(AttackSpec::parse(item));
  if (attacks.empty()) throw InvalidArgument("empty attack list");
  return attacks;
}

void append_log(const std::string& log_path, const CLI::App& sub, const std::vector<std::string>& config_files) {
  if (log_path.empty()) return;
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot open log file " + log_path);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  log << "# " << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << " latentmark " << sub.get_name() << "\n";
  for (const auto& f : config_files) log << "# config file: " << f << "\n";
  log << sub.config_to_str(true, false) << "\n";
  if (!log) throw IoError("cannot write log file " + log_path);
}

std::vector<std::string> config_files_in(const std::vector<std::string>& args) {
  std::vector<std::string> files;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) files.push_back(args[i + 1]);
    if (args[i].rfind("--config=", 0) == 0) files.push_back(args[i].substr(9));
  }
  return files;
}

struct Options {
  // shared
  std::string key, weights, whitening, out, report, log = "latentmark.log";
  std::uint64_t seed = 0;
  int jobs = 1;
  // keygen
  std::string kind = "zero";
  int d = 64, k = 0;
  // weights-export
  std::string arch = ExtractorSpec::desk().to_string();
  // whiten / gen-corpus
  std::string corpus;
  int synthetic = 0, size = 128, count = 32, dim = 64;
  double eps = 1e-6;
  std::string corpus_kind = "synthetic";
  // embed / detect / decode / eval
  std::string input, message, augment = "all", manifest, attacks, plot;
  double psnr = 40.0, fpr = 1e-6, lr = 0.01, lambda = 0.0, margin = 5.0;
  int iters = 100, aug_per_iter = 1;
};

int cmd_keygen(const Options& o, std::ostream& out) {
  Key key;
  if (o.kind == "zero") {
    key = gen_zero_bit_key(o.seed, o.d);
  } else {
    if (o.k < 1) throw InvalidArgument("--kind multi needs --k >= 1");
    key = gen_multi_bit_key(o.seed, o.k, o.d);
  }
  save_key(key, o.out);
  out << "wrote " << o.kind << "-bit key (d=" << o.d << ") to " << o.out << "\n";
  return kOk;
}

int cmd_weights_export(const Options& o, std::ostream& out) {
  const Extractor ex = build_extractor(ExtractorSpec::parse(o.arch), o.seed);
  save_extractor(ex, o.out);
  out << "wrote extractor " << ex.spec().to_string() << " (output " << ex.output_dim() << ") to " << o.out << "\n";
  return kOk;
}

int cmd_gen_corpus(const Options& o, std::ostream& out) {
  if (o.count < 1 || o.size < 1) throw InvalidArgument("--count and --size must be positive");
  fs::create_directories(o.out);
  std::ofstream manifest(fs::path(o.out) / "manifest.txt");
  if (!manifest) throw IoError("cannot write manifest in " + o.out);
  for (int i = 0; i < o.count; ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(4) << std::setfill('0') << i << ".png";
    const std::uint64_t s = o.seed + static_cast<std::uint64_t>(i);
    const Image img = o.corpus_kind == "noise" ? noise_image(s, o.size, o.size) : synthetic_image(s, o.size, o.size);
    save_image(img, fs::path(o.out) / name.str());
    manifest << name.str() << "\n";
  }
  out << "wrote " << o.count << " images and manifest.txt to " << o.out << "\n";
  return kOk;
}

int cmd_whiten(const Options& o, std::ostream& out) {
  const Extractor ex = load_extractor(o.weights);
  std::vector<fs::path> paths;
  if (!o.corpus.empty()) paths = corpus_paths(o.corpus);
  const std::size_t n = o.corpus.empty() ? static_cast<std::size_t>(o.synthetic) : paths.size();
  if (n <= static_cast<std::size_t>(o.dim))
    throw InvalidArgument("too few images: " + std::to_string(n) + " for dimension " + std::to_string(o.dim) +
                          " (need more than " + std::to_string(o.dim) + ")");
  std::vector<RawFeature> raw(n);
  parallel_for(n, o.jobs, [&](std::size_t i) {
    const Image img = o.corpus.empty() ? synthetic_image(o.seed + i, o.size, o.size) : load_image(paths[i]);
    raw[i] = ex.forward(img);
  });
  save_whitening(fit_whitening(raw, o.dim, o.eps), o.out);
  out << "fitted " << o.dim << "-dimensional whitening on " << n << " images, wrote " << o.out << "\n";
  return kOk;
}

int cmd_embed(const Options& o, bool has_fpr, bool has_message, bool has_lambda, std::ostream& out) {
  if (has_fpr == has_message) throw InvalidArgument("give exactly one of --fpr (zero-bit) or --message (multi-bit)");
  const FeatureModel model = load_model(o.weights, o.whitening);
  const Key key = load_key(o.key);
  EmbedConfig cfg;
  if (has_fpr) {
    const auto zk = key_of_kind<ZeroBitKey>(key, "zero-bit");
    check_dims(zk.dim(), model);
    cfg = EmbedConfig::zero_bit(o.fpr);
  } else {
    const auto mk = key_of_kind<MultiBitKey>(key, "multi-bit");
    check_dims(mk.dim(), model);
    cfg = EmbedConfig::multi_bit(parse_message(o.message, mk.k));
  }
  if (has_lambda) cfg.lambda = o.lambda;
  cfg.target_psnr = o.psnr;
  cfg.margin = o.margin;
  cfg.iterations = o.iters;
  cfg.learning_rate = o.lr;
  cfg.augmentations_per_iter = o.aug_per_iter;
  cfg.augmentation = AugmentationPolicy::parse(o.augment);
  cfg.seed = o.seed;
  cfg.validate();

  const Image orig = load_image(o.input);
  const EmbedResult result = embed(model, orig, key, cfg);
  save_image(result.image, o.out);
  if (!o.report.empty()) {
    std::ofstream rep(o.report);
    rep << report_to_json(result.report, cfg) << "\n";
    if (!rep) throw IoError("cannot write report " + o.report);
  }
  out << "psnr=" << num(result.report.final_psnr) << " in_region=" << (result.report.in_region ? "true" : "false");
  if (has_fpr) out << " p_value=" << num(result.report.p_value);
  else out << " decoded=" << result.report.decoded.to_bit_string();
  out << "\n";
  return kOk;
}

int cmd_detect(const Options& o, std::ostream& out) {
  const FeatureModel model = load_model(o.weights, o.whitening);
  const auto key = key_of_kind<ZeroBitKey>(load_key(o.key), "zero-bit");
  check_dims(key.dim(), model);
  const DetectResult r = detect(model, load_image(o.input), key, angle_of_fpr(o.fpr, key.dim()));
  out << "detected=" << (r.detected ? "true" : "false") << " score=" << num(r.score) << " p_value=" << num(r.p_value)
      << "\n";
  return r.detected ? kOk : kNotDetected;
}

int cmd_decode(const Options& o, bool has_message, std::ostream& out) {
  const FeatureModel model = load_model(o.weights, o.whitening);
  const auto key = key_of_kind<MultiBitKey>(load_key(o.key), "multi-bit");
  check_dims(key.dim(), model);
  const Message got = decode(model, load_image(o.input), key);
  out << got.to_bit_string() << "\n";
  if (!has_message) return kOk;
  const Message want = parse_message(o.message, key.k);
  int errors = 0;
  for (int i = 0; i < key.k; ++i) errors += got.bits[i] != want.bits[i];
  out << "bit_errors=" << errors << "\n";
  return errors == 0 ? kOk : kNotDetected;
}

int cmd_eval(const Options& o, std::ostream& out) {
  std::vector<std::string> per_image;
  const auto paths = read_manifest_lines(o.manifest, &per_image);
  if (paths.empty()) throw InvalidArgument("empty manifest " + o.manifest);
  const FeatureModel model = load_model(o.weights, o.whitening);
  const Key key = load_key(o.key);
  const auto attacks = parse_attacks(o.attacks);
  std::vector<Image> images(paths.size());
  parallel_for(paths.size(), o.jobs, [&](std::size_t i) { images[i] = load_image(paths[i]); });

  EvalTable table;
  std::string metric;
  if (const auto* zk = std::get_if<ZeroBitKey>(&key)) {
    check_dims(zk->dim(), model);
    table = evaluate_zero_bit(model, images, *zk, angle_of_fpr(o.fpr, zk->dim()), attacks, o.jobs);
    metric = "tpr";
  } else {
    const auto& mk = std::get<MultiBitKey>(key);
    check_dims(mk.dim(), model);
    std::vector<Message> messages;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const std::string& text = per_image[i].empty() ? o.message : per_image[i];
      if (text.empty()) throw InvalidArgument("no message for " + paths[i].string() + " (manifest column or --message)");
      messages.push_back(parse_message(text, mk.k));
    }
    table = evaluate_multi_bit(model, images, mk, messages, attacks, o.jobs);
    metric = "ber";
  }
  write_report(table, o.out);
  if (!o.plot.empty()) write_svg_plot(table, metric, o.plot);
  out << format_report(table);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-space image watermarking"};
  app.name("latentmark");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Options o;
  std::function<int()> action;
  std::vector<CLI::App*> subs;

  auto add_sub = [&](const std::string& name, const std::string& desc) {
    CLI::App* s = app.add_subcommand(name, desc);
    s->add_option("--config", "Flat key=value file; command-line flags override it");
    s->add_option("--log", o.log, "Append the resolved configuration to this file (empty disables)")
        ->capture_default_str();
    subs.push_back(s);
    return s;
  };
  auto add_model = [&](CLI::App* s) {
    s->add_option("--weights", o.weights, "Extractor weights file")->required();
    s->add_option("--whitening", o.whitening, "Whitening file")->required();
  };
  auto add_key = [&](CLI::App* s) { s->add_option("--key", o.key, "Key file")->required(); };

  CLI::App* keygen = add_sub("keygen", "Generate a zero-bit or multi-bit key");
  keygen->add_option("--kind", o.kind, "zero | multi")->check(CLI::IsMember({"zero", "multi"}))->capture_default_str();
  keygen->add_option("--d", o.d, "Feature dimension")->capture_default_str();
  keygen->add_option("--k", o.k, "Number of bits (multi)");
  keygen->add_option("--seed", o.seed)->capture_default_str();
  keygen->add_option("--out", o.out, "Key file to write")->required();
  keygen->callback([&] { action = [&] { return cmd_keygen(o, out); }; });

  CLI::App* wexp = add_sub("weights-export", "Build a seeded extractor and write its weights");
  wexp->add_option("--arch", o.arch, "Layer description")->capture_default_str();
  wexp->add_option("--seed", o.seed)->capture_default_str();
  wexp->add_option("--out", o.out, "Weights file to write")->required();
  wexp->callback([&] { action = [&] { return cmd_weights_export(o, out); }; });

  CLI::App* gen = add_sub("gen-corpus", "Write procedural images and a manifest");
  gen->add_option("--count", o.count)->capture_default_str();
  gen->add_option("--size", o.size, "Square image side")->capture_default_str();
  gen->add_option("--seed", o.seed, "Seed of the first image")->capture_default_str();
  gen->add_option("--kind", o.corpus_kind, "synthetic | noise")
      ->check(CLI::IsMember({"synthetic", "noise"}))
      ->capture_default_str();
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->callback([&] { action = [&] { return cmd_gen_corpus(o, out); }; });

  CLI::App* whiten = add_sub("whiten", "Fit PCA whitening on a corpus");
  whiten->alias("fit");
  whiten->add_option("--weights", o.weights, "Extractor weights file")->required();
  auto* corpus_opt = whiten->add_option("--corpus", o.corpus, "Manifest file or image directory");
  auto* synth_opt = whiten->add_option("--synthetic", o.synthetic, "Use N procedural images instead of a corpus");
  corpus_opt->excludes(synth_opt);
  whiten->add_option("--size", o.size, "Procedural image side")->capture_default_str();
  whiten->add_option("--seed", o.seed, "Seed of the first procedural image")->capture_default_str();
  whiten->add_option("--dim", o.dim, "Output dimension")->capture_default_str();
  whiten->add_option("--eps", o.eps, "Eigenvalue floor")->capture_default_str();
  whiten->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber)->capture_default_str();
  whiten->add_option("--out", o.out, "Whitening file to write")->required();
  whiten->callback([&] {
    if (!corpus_opt->count() && !synth_opt->count()) throw CLI::ValidationError("give --corpus or --synthetic");
    action = [&] { return cmd_whiten(o, out); };
  });

  CLI::App* emb = add_sub("embed", "Watermark an image");
  add_model(emb);
  add_key(emb);
  emb->add_option("--input", o.input, "Image to mark")->required();
  emb->add_option("--out", o.out, "Marked image (PNG or PPM)")->required();
  emb->add_option("--report", o.report, "JSON report");
  auto* fpr_opt = emb->add_option("--fpr", o.fpr, "Zero-bit: target false positive rate");
  auto* msg_opt = emb->add_option("--message", o.message, "Multi-bit: hex (MSB first) or 0b-prefixed bits");
  emb->add_option("--psnr", o.psnr, "Target PSNR in dB")->capture_default_str();
  emb->add_option("--iters", o.iters)->capture_default_str();
  emb->add_option("--lr", o.lr)->capture_default_str();
  auto* lambda_opt = emb->add_option("--lambda", o.lambda, "Watermark loss weight (default 1 zero-bit, 5e4 multi-bit)");
  emb->add_option("--margin", o.margin, "Multi-bit hinge margin")->capture_default_str();
  emb->add_option("--augment", o.augment, "Marking-time transformations, e.g. all or identity,rotation,noflip")
      ->capture_default_str();
  emb->add_option("--aug-per-iter", o.aug_per_iter)->capture_default_str();
  emb->add_option("--seed", o.seed)->capture_default_str();
  emb->callback([&, fpr_opt, msg_opt, lambda_opt] {
    // Resolve the mode-dependent default so that the log shows the value used.
    if (!lambda_opt->count())
      lambda_opt->default_str(msg_opt->count() ? num(EmbedConfig::kMultiBitLambda) : num(EmbedConfig::kZeroBitLambda));
    action = [&, fpr_opt, msg_opt, lambda_opt] {
      return cmd_embed(o, fpr_opt->count() > 0, msg_opt->count() > 0, lambda_opt->count() > 0, out);
    };
  });

  CLI::App* det = add_sub("detect", "Zero-bit detection; exit 0 when detected, 1 otherwise");
  add_model(det);
  add_key(det);
  det->add_option("--input", o.input)->required();
  det->add_option("--fpr", o.fpr, "False positive rate of the detector")->capture_default_str();
  det->callback([&] { action = [&] { return cmd_detect(o, out); }; });

  CLI::App* dec = add_sub("decode", "Multi-bit decoding; with --message, exit 1 on any bit error");
  add_model(dec);
  add_key(dec);
  dec->add_option("--input", o.input)->required();
  auto* dec_msg = dec->add_option("--message", o.message, "Expected message");
  dec->callback([&] { action = [&, dec_msg] { return cmd_decode(o, dec_msg->count() > 0, out); }; });

  CLI::App* ev = add_sub("eval", "Attack grid evaluation over a manifest of marked images");
  add_model(ev);
  add_key(ev);
  ev->add_option("--manifest", o.manifest, "One image path per line, optional message column")->required();
  ev->add_option("--attacks", o.attacks, "Comma list such as identity,rotation:25,jpeg:50 (default grid if empty)");
  ev->add_option("--fpr", o.fpr, "Zero-bit detector false positive rate")->capture_default_str();
  ev->add_option("--message", o.message, "Multi-bit message for rows without one");
  ev->add_option("--out", o.out, "CSV report")->required();
  ev->add_option("--plot", o.plot, "SVG plot of the main metric");
  ev->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber)->capture_default_str();
  ev->callback([&] { action = [&] { return cmd_eval(o, out); }; });

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
    app.parse(args);
    for (CLI::App* s : subs)
      if (s->parsed()) append_log(o.log, *s, config_files_in(raw_args));
    return action();
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  }
}

}  // namespace latentmark::cli
