#include "dptbench/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace dptbench {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'T', 'B', 'N', 'C', 'K', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t len = read_u64(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

nlohmann::json config_to_json(const nn::EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"hidden_dim", c.hidden_dim},
          {"layers", c.layers},         {"heads", c.heads},
          {"ffn_dim", c.ffn_dim},       {"max_len", c.max_len},
          {"dropout", c.dropout},       {"dlm_bias", c.dlm_bias}};
}

nn::EncoderConfig config_from_json(const nlohmann::json& j) {
  nn::EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<Index>();
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.layers = j.at("layers").get<Index>();
  c.heads = j.at("heads").get<Index>();
  c.ffn_dim = j.at("ffn_dim").get<Index>();
  c.max_len = j.at("max_len").get<Index>();
  c.dropout = j.at("dropout").get<Scalar>();
  c.dlm_bias = j.at("dlm_bias").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(kMagic, sizeof(kMagic));

  nlohmann::json header;
  header["config"] = config_to_json(ckpt.model.encoder.config);
  header["meta"] = ckpt.meta;
  header["vocab"] = ckpt.vocab.tokens();
  header["heads"] = {{"dlm", ckpt.model.dlm.has_value()},
                     {"cls", ckpt.model.cls.has_value()},
                     {"token_label", ckpt.model.token_label.has_value()}};
  write_string(out, header.dump());

  std::uint64_t count = 0;
  visit_model(const_cast<nn::ModelParams&>(ckpt.model),
              [&](const std::string&, nn::Tensor&) { ++count; });
  write_u64(out, count);
  visit_model(const_cast<nn::ModelParams&>(ckpt.model),
              [&](const std::string& name, nn::Tensor& t) {
                write_string(out, name);
                write_u64(out, static_cast<std::uint64_t>(t.rows()));
                write_u64(out, static_cast<std::uint64_t>(t.cols()));
                out.write(reinterpret_cast<const char*>(t.data()),
                          static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
              });
  if (!out) throw IoError("write failed: " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(file.string() + ": not a dptbench checkpoint");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_string(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(file.string() + ": corrupt header: " + e.what());
  }

  Checkpoint ckpt;
  ckpt.meta = header.at("meta");
  const nn::EncoderConfig config = config_from_json(header.at("config"));

  const auto tokens = header.at("vocab").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i < static_cast<std::size_t>(text::Vocab::kNumSpecials)) {
      if (tokens[i] != text::Vocab::specials()[i])
        throw IoError(file.string() + ": vocab specials out of order");
      continue;
    }
    ckpt.vocab.add_token(tokens[i]);
  }

  std::unordered_map<std::string, nn::Tensor> loaded;
  const std::uint64_t count = read_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    const auto rows = static_cast<Index>(read_u64(in));
    const auto cols = static_cast<Index>(read_u64(in));
    nn::Tensor t = nn::Tensor::zeros(rows, cols);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
    loaded.emplace(name, std::move(t));
  }
  if (!in) throw IoError(file.string() + ": truncated checkpoint");

  ckpt.model.encoder.config = config;
  ckpt.model.encoder.layers.resize(static_cast<std::size_t>(config.layers));
  const auto& heads = header.at("heads");
  if (heads.at("dlm").get<bool>()) {
    ckpt.model.dlm.emplace();
    ckpt.model.dlm->use_bias = config.dlm_bias;
  }
  if (heads.at("cls").get<bool>()) ckpt.model.cls.emplace();
  if (heads.at("token_label").get<bool>()) ckpt.model.token_label.emplace();

  visit_model(ckpt.model, [&](const std::string& name, nn::Tensor& t) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw IoError(file.string() + ": missing tensor " + name);
    t = std::move(it->second);
  });
  return ckpt;
}

}  // namespace dptbench
