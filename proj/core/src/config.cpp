#include "rstattn/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "rstattn/errors.hpp"

namespace rstattn {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(LddMode mode) {
  switch (mode) {
    case LddMode::with_relations: return "with_relations";
    case LddMode::without_relations: return "without_relations";
    case LddMode::off: return "off";
    case LddMode::wac: return "wac";
    case LddMode::ria: return "ria";
  }
  throw ContractError("invalid LddMode");
}

LddMode ldd_mode_from_string(const std::string& s) {
  if (s == "with_relations") return LddMode::with_relations;
  if (s == "without_relations") return LddMode::without_relations;
  if (s == "off") return LddMode::off;
  if (s == "wac") return LddMode::wac;
  if (s == "ria") return LddMode::ria;
  throw ValidationError("unknown ldd_mode '" + s + "'");
}

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
  if (c.d_model <= 0) fail("d_model must be positive");
  if (c.h <= 0) fail("h must be positive");
  if (c.d_model % c.h != 0) fail("d_model must be divisible by h");
  if (c.w <= 0 || c.w % 2 != 0) fail("w must be a positive even window size");
  if (c.dilation < 1) fail("dilation must be >= 1");
  if (c.n_enc_layers < 1 || c.n_dec_layers < 1) fail("layer counts must be >= 1");
  if (c.vocab_size < 0) fail("vocab_size must be >= 0");
  if (c.max_seq_len < 1) fail("max_seq_len must be >= 1");
  if (c.dropout < 0.0 || c.dropout >= 1.0) fail("dropout must lie in [0,1)");
  if (c.lr < 0.0) fail("lr must be >= 0");
  if (c.warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (c.adam_beta1 < 0.0 || c.adam_beta1 >= 1.0 || c.adam_beta2 < 0.0 ||
      c.adam_beta2 >= 1.0) {
    fail("adam betas must lie in [0,1)");
  }
  if (c.adam_eps <= 0.0) fail("adam_eps must be positive");
  if (c.weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (c.noise_lambda < 0.0) fail("noise_lambda must be >= 0");
  if (c.beam_size < 1) fail("beam_size must be >= 1");
  if (c.no_repeat_ngram < 0) fail("no_repeat_ngram must be >= 0 (0 disables)");
  if (c.ldd_fill < 0.0 || c.ldd_fill > 1.0) fail("ldd_fill must lie in [0,1]");
  if (c.max_epochs < 0) fail("max_epochs must be >= 0");
  if (c.patience < 1) fail("patience must be >= 1");
}

namespace {

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  static const std::set<std::string> known = {
      "d_model", "h", "w", "dilation", "n_enc_layers", "n_dec_layers",
      "vocab_size", "max_seq_len", "dropout", "lr", "warmup_steps",
      "adam_beta1", "adam_beta2", "adam_eps", "weight_decay", "noise_lambda",
      "beam_size", "length_penalty_alpha", "no_repeat_ngram", "seed",
      "ldd_fill", "ldd_mode", "max_epochs", "patience"};
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("config: unknown field '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("d_model", c.d_model);
  get("h", c.h);
  get("w", c.w);
  get("dilation", c.dilation);
  get("n_enc_layers", c.n_enc_layers);
  get("n_dec_layers", c.n_dec_layers);
  get("vocab_size", c.vocab_size);
  get("max_seq_len", c.max_seq_len);
  get("dropout", c.dropout);
  get("lr", c.lr);
  get("warmup_steps", c.warmup_steps);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  get("weight_decay", c.weight_decay);
  get("noise_lambda", c.noise_lambda);
  get("beam_size", c.beam_size);
  get("length_penalty_alpha", c.length_penalty_alpha);
  get("no_repeat_ngram", c.no_repeat_ngram);
  get("seed", c.seed);
  get("ldd_fill", c.ldd_fill);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  if (j.contains("ldd_mode"))
    c.ldd_mode = ldd_mode_from_string(j.at("ldd_mode").get<std::string>());
  validate(c);
  return c;
}

}  // namespace

ModelConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return config_from_json_text(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string config_to_json_text(const ModelConfig& c) {
  ordered_json j;
  j["d_model"] = c.d_model;
  j["h"] = c.h;
  j["w"] = c.w;
  j["dilation"] = c.dilation;
  j["n_enc_layers"] = c.n_enc_layers;
  j["n_dec_layers"] = c.n_dec_layers;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["dropout"] = c.dropout;
  j["lr"] = c.lr;
  j["warmup_steps"] = c.warmup_steps;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["weight_decay"] = c.weight_decay;
  j["noise_lambda"] = c.noise_lambda;
  j["beam_size"] = c.beam_size;
  j["length_penalty_alpha"] = c.length_penalty_alpha;
  j["no_repeat_ngram"] = c.no_repeat_ngram;
  j["seed"] = c.seed;
  j["ldd_fill"] = c.ldd_fill;
  j["ldd_mode"] = to_string(c.ldd_mode);
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  return j.dump(2);
}

}  // namespace rstattn
