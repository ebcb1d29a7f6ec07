#include "dptbench/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace dptbench::text {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || u >= 0x80;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

const std::array<std::string, Vocab::kNumSpecials>& Vocab::specials() {
  static const std::array<std::string, kNumSpecials> kSpecials = {
      "[CLS]", "[SEP]", "[PAD]", "[UNK]", "[MASK]"};
  return kSpecials;
}

Vocab::Vocab() {
  for (const std::string& s : specials()) {
    token_to_id_.emplace(s, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(s);
  }
}

bool Vocab::contains(std::string_view token) const {
  return token_to_id_.find(std::string(token)) != token_to_id_.end();
}

int Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw ContractError("Vocab::token: id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocab::add_token(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  const int id = size();
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

Vocab Vocab::build(std::span<const std::string> corpus, int min_count) {
  if (corpus.empty()) throw ContractError("Vocab::build: empty corpus");
  std::unordered_map<std::string, long> counts;
  for (const std::string& line : corpus) {
    for (std::string& w : split_words(line)) {
      if (w.size() > 1 && w.front() == '[') continue;  // special literals are preseeded
      ++counts[std::move(w)];
    }
  }
  std::vector<std::pair<std::string, long>> kept;
  kept.reserve(counts.size());
  for (auto& [tok, cnt] : counts)
    if (cnt >= min_count) kept.emplace_back(tok, cnt);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab v;
  for (auto& [tok, cnt] : kept) v.add_token(tok);
  return v;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j == i) break;
    const std::string_view word = text.substr(i, j - i);
    i = j;

    const std::string lowered = ascii_lower(word);
    bool special = false;
    for (const std::string& s : Vocab::specials()) {
      if (lowered == ascii_lower(s)) {
        out.push_back(s);
        special = true;
        break;
      }
    }
    if (special) continue;

    std::string run;
    for (char c : lowered) {
      if (is_word_char(c)) {
        run.push_back(c);
      } else {
        if (!run.empty()) {
          out.push_back(std::move(run));
          run.clear();
        }
        out.push_back(std::string(1, c));
      }
    }
    if (!run.empty()) out.push_back(std::move(run));
  }
  return out;
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab) {
  TokenSequence ids;
  for (const std::string& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

void inject_text_tokens(Vocab& vocab, std::string_view text) {
  for (const std::string& w : split_words(text)) vocab.add_token(w);
}

void ClassSet::validate() const {
  if (names.size() < 2) throw ContractError("ClassSet: need at least 2 classes");
  std::unordered_set<std::string> seen;
  for (const std::string& n : names)
    if (!seen.insert(n).second) throw ContractError("ClassSet: duplicate class name");
}

namespace {

struct SynthTables {
  std::vector<std::vector<std::string>> content;  // [class][j]
  std::vector<std::string> filler;
  std::vector<std::unordered_set<std::string>> content_sets;
};

SynthTables make_tables(int n_classes, const SynthOptions& opt) {
  SynthTables t;
  t.content.resize(static_cast<std::size_t>(n_classes));
  t.content_sets.resize(static_cast<std::size_t>(n_classes));
  for (int k = 0; k < n_classes; ++k) {
    for (int j = 0; j < opt.content_tokens_per_class; ++j) {
      std::string tok = "c" + std::to_string(k) + "w" + std::to_string(j);
      t.content_sets[static_cast<std::size_t>(k)].insert(tok);
      t.content[static_cast<std::size_t>(k)].push_back(std::move(tok));
    }
  }
  for (int j = 0; j < opt.filler_tokens; ++j) t.filler.push_back("f" + std::to_string(j));
  return t;
}

std::string draw_token(RngStream& rng, const SynthTables& t, int cls, int n_classes,
                       const SynthOptions& opt) {
  if (rng.uniform() < opt.content_prob) {
    int k = cls;
    if (rng.uniform() < opt.cross_class_prob)
      k = static_cast<int>(rng.uniform_int(n_classes));
    const auto& pool = t.content[static_cast<std::size_t>(k)];
    return pool[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
  }
  return t.filler[static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(t.filler.size())))];
}

std::string draw_sentence(RngStream& rng, const SynthTables& t, int cls, int n_classes,
                          const SynthOptions& opt) {
  const int len = opt.min_sentence_len +
                  static_cast<int>(rng.uniform_int(opt.max_sentence_len - opt.min_sentence_len + 1));
  std::string s;
  for (int i = 0; i < len; ++i) {
    if (i) s.push_back(' ');
    s += draw_token(rng, t, cls, n_classes, opt);
  }
  return s;
}

QARecord draw_qa_record(RngStream& rng, const SynthTables& t, int n_classes,
                        const SynthOptions& opt) {
  QARecord rec;
  const int answer_cls = static_cast<int>(rng.uniform_int(n_classes));
  const int n_sent = opt.qa_sentences_per_paragraph;
  std::vector<int> sentence_cls(static_cast<std::size_t>(n_sent));
  for (int& c : sentence_cls) c = static_cast<int>(rng.uniform_int(n_classes));
  sentence_cls[static_cast<std::size_t>(rng.uniform_int(n_sent))] = answer_cls;

  for (int j = 0; j < n_sent; ++j) {
    if (j) rec.paragraph.push_back(' ');
    rec.paragraph += draw_sentence(rng, t, sentence_cls[static_cast<std::size_t>(j)],
                                   n_classes, opt);
  }
  const auto& pool = t.content[static_cast<std::size_t>(answer_cls)];
  for (int j = 0; j < opt.qa_question_tokens; ++j) {
    if (j) rec.question.push_back(' ');
    rec.question +=
        pool[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(pool.size())))];
  }
  // Gold spans index the tokenized paragraph, exact by construction.
  const std::vector<std::string> words = split_words(rec.paragraph);
  std::vector<bool> mask(words.size());
  const auto& answers = t.content_sets[static_cast<std::size_t>(answer_cls)];
  for (std::size_t i = 0; i < words.size(); ++i)
    mask[i] = answers.count(words[i]) > 0;
  rec.answer_spans = SpanSet::from_mask(mask);
  return rec;
}

}  // namespace

SynthCorpus synth_corpus(int n_classes, int n_per_class, std::uint64_t seed,
                         const SynthOptions& opt) {
  if (n_classes < 2) throw ContractError("synth_corpus: n_classes must be >= 2");
  if (n_per_class < 1) throw ContractError("synth_corpus: n_per_class must be >= 1");
  const SynthTables tables = make_tables(n_classes, opt);
  const int dev_per_class = std::max(1, n_per_class / 5);

  SynthCorpus out;
  for (int k = 0; k < n_classes; ++k)
    out.classification.classes.names.push_back(tables.content[static_cast<std::size_t>(k)][0]);

  {
    RngStream rng(mix_seed(seed, 1));
    for (int i = 0; i < n_classes * n_per_class; ++i)
      out.unlabeled.push_back(draw_sentence(rng, tables, i % n_classes, n_classes, opt));
  }
  {
    RngStream rng(mix_seed(seed, 2));
    for (int k = 0; k < n_classes; ++k)
      for (int i = 0; i < n_per_class; ++i)
        out.classification.train.push_back(
            {draw_sentence(rng, tables, k, n_classes, opt), k, Split::kTrain});
  }
  {
    RngStream rng(mix_seed(seed, 3));
    for (int k = 0; k < n_classes; ++k)
      for (int i = 0; i < dev_per_class; ++i)
        out.classification.dev.push_back(
            {draw_sentence(rng, tables, k, n_classes, opt), k, Split::kDev});
  }
  {
    RngStream rng(mix_seed(seed, 4));
    for (int i = 0; i < n_per_class; ++i)
      out.qa.train.push_back(draw_qa_record(rng, tables, n_classes, opt));
  }
  {
    RngStream rng(mix_seed(seed, 5));
    for (int i = 0; i < dev_per_class; ++i)
      out.qa.dev.push_back(draw_qa_record(rng, tables, n_classes, opt));
  }
  return out;
}

namespace {

void check_fraction(Scalar fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ContractError("subsample: fraction must be in (0, 1]");
}

std::vector<std::size_t> pick(std::vector<std::size_t> pool, Scalar fraction, RngStream& rng) {
  const auto want = std::max<std::int64_t>(
      1, std::llround(fraction * static_cast<Scalar>(pool.size())));
  const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(want));
  rng.shuffle(pool);
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

ClsDataset subsample(const ClsDataset& data, Scalar fraction, std::uint64_t seed,
                     SubsampleMode mode) {
  check_fraction(fraction);
  if (fraction == 1.0) return data;

  ClsDataset out;
  out.classes = data.classes;
  out.dev = data.dev;
  RngStream rng(mix_seed(seed, 0x5b5));
  if (mode == SubsampleMode::kStratified) {
    for (int k = 0; k < data.classes.size(); ++k) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < data.train.size(); ++i)
        if (data.train[i].gold == k) pool.push_back(i);
      if (pool.empty()) continue;
      for (std::size_t i : pick(std::move(pool), fraction, rng))
        out.train.push_back(data.train[i]);
    }
  } else {
    std::vector<std::size_t> pool(data.train.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    for (std::size_t i : pick(std::move(pool), fraction, rng))
      out.train.push_back(data.train[i]);
  }
  return out;
}

QADataset subsample(const QADataset& data, Scalar fraction, std::uint64_t seed) {
  check_fraction(fraction);
  if (fraction == 1.0) return data;
  QADataset out;
  out.dev = data.dev;
  RngStream rng(mix_seed(seed, 0x5b5));
  std::vector<std::size_t> pool(data.train.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  for (std::size_t i : pick(std::move(pool), fraction, rng))
    out.train.push_back(data.train[i]);
  return out;
}

namespace {

std::vector<std::pair<std::string, std::string>> read_tsv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw IoError(file.string() + ":" + std::to_string(lineno) + ": missing tab separator");
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

}  // namespace

ClsDataset load_classification_tsv(const std::filesystem::path& train_file,
                                   const std::filesystem::path& dev_file) {
  const auto train_rows = read_tsv(train_file);
  const auto dev_rows = read_tsv(dev_file);

  std::map<std::string, int> labels;  // sorted: class order independent of line order
  for (const auto& [label, text] : train_rows) labels.emplace(label, 0);
  for (const auto& [label, text] : dev_rows) labels.emplace(label, 0);
  ClsDataset out;
  for (auto& [label, idx] : labels) {
    idx = out.classes.size();
    out.classes.names.push_back(label);
  }
  out.classes.validate();
  for (const auto& [label, text] : train_rows)
    out.train.push_back({text, labels.at(label), Split::kTrain});
  for (const auto& [label, text] : dev_rows)
    out.dev.push_back({text, labels.at(label), Split::kDev});
  return out;
}

namespace {

std::vector<QARecord> read_qa_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(file.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw IoError(file.string() + ": expected a JSON array");

  std::vector<QARecord> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("question") || !item.contains("paragraph") ||
        !item.contains("answer_spans"))
      throw IoError(file.string() + ": record needs question/paragraph/answer_spans");
    QARecord rec;
    rec.question = item.at("question").get<std::string>();
    rec.paragraph = item.at("paragraph").get<std::string>();
    std::vector<SpanSet::Interval> spans;
    for (const auto& s : item.at("answer_spans")) {
      if (!s.is_array() || s.size() != 2)
        throw IoError(file.string() + ": answer span must be [start, end]");
      spans.push_back({s.at(0).get<Index>(), s.at(1).get<Index>()});
    }
    rec.answer_spans = SpanSet::from_intervals(std::move(spans));
    const auto n_tokens = static_cast<Index>(split_words(rec.paragraph).size());
    if (rec.answer_spans.max_end() >= n_tokens)
      throw IoError(file.string() + ": answer span exceeds paragraph length");
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

QADataset load_qa_json(const std::filesystem::path& train_file,
                       const std::filesystem::path& dev_file) {
  QADataset out;
  out.train = read_qa_json(train_file);
  out.dev = read_qa_json(dev_file);
  return out;
}

}  // namespace dptbench::text
