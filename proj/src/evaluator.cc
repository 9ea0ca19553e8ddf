#include "genqa/evaluator.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "genqa/checkpoint.h"
#include "genqa/error.h"
#include "genqa/text.h"

namespace genqa {

using nlohmann::ordered_json;

// --- accuracy ----------------------------------------------------------------------

double accuracy(std::span<const Judgment> judgments) {
  if (judgments.empty()) throw Error("accuracy: no judgments");
  double sum = 0.0;
  for (const auto& j : judgments) {
    if (j.verdicts.empty()) throw Error("accuracy: judgment for " + j.example_id + " has no verdicts");
    double s = 0.0;
    for (int v : j.verdicts) {
      if (v != 0 && v != 1) throw Error("accuracy: verdicts must be 0 or 1");
      s += v;
    }
    sum += s / static_cast<double>(j.verdicts.size());
  }
  return sum / static_cast<double>(judgments.size());
}

Judgment judge(const GenerationRecord& generation, const QAExample& example) {
  if (generation.id != example.id)
    throw Error("judge: generation " + generation.id + " does not belong to example " + example.id);
  return Judgment{example.id, generation.text, {oracle_correct(generation.text, example) ? 1 : 0}};
}

std::vector<Judgment> judge_all(std::span<const GenerationRecord> generations, std::span<const QAExample> corpus) {
  std::unordered_map<std::string_view, const QAExample*> by_id;
  for (const auto& e : corpus) by_id.emplace(e.id, &e);
  std::vector<Judgment> out;
  out.reserve(generations.size());
  for (const auto& g : generations) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw Error("generation id " + g.id + " not found in corpus");
    out.push_back(judge(g, *it->second));
  }
  return out;
}

// --- BLEU ---------------------------------------------------------------------------

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

double bleu(std::string_view candidate, std::span<const std::string> references) {
  if (references.empty()) throw Error("bleu: empty reference list");
  const auto cand = split_tokens(candidate);
  if (cand.empty()) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(split_tokens(r));

  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts c = ngrams(cand, n);
    NgramCounts max_ref;
    for (const auto& r : refs)
      for (const auto& [g, cnt] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
    std::size_t matches = 0, total = 0;
    for (const auto& [g, cnt] : c) {
      total += cnt;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matches += std::min(cnt, it->second);
    }
    double p;
    if (n == 1) {
      if (matches == 0) return 0.0;
      p = static_cast<double>(matches) / static_cast<double>(total);
    } else {
      p = (static_cast<double>(matches) + 1.0) / (static_cast<double>(total) + 1.0);
    }
    log_sum += std::log(p) / 4.0;
  }
  // Closest reference length; the shorter one on ties.
  const double c_len = static_cast<double>(cand.size());
  double r_len = static_cast<double>(refs.front().size());
  for (const auto& r : refs) {
    const double len = static_cast<double>(r.size());
    const double d = std::abs(len - c_len), best = std::abs(r_len - c_len);
    if (d < best || (d == best && len < r_len)) r_len = len;
  }
  const double bp = c_len < r_len ? std::exp(1.0 - r_len / c_len) : 1.0;
  return std::clamp(100.0 * bp * std::exp(log_sum), 0.0, 100.0);
}

double bleu(std::string_view candidate, std::initializer_list<std::string> references) {
  return bleu(candidate, std::span<const std::string>(references.begin(), references.size()));
}

// --- clusters ----------------------------------------------------------------------

BucketTable bucket_cluster_accuracy(std::span<const GenerationRecord> generations,
                                    std::span<const Judgment> judgments) {
  if (generations.size() != judgments.size())
    throw Error("bucket_cluster_accuracy: generations and judgments differ in length");
  std::map<std::string, std::pair<std::size_t, double>> acc;
  for (std::size_t i = 0; i < generations.size(); ++i) {
    if (generations[i].id != judgments[i].example_id)
      throw Error("bucket_cluster_accuracy: id mismatch at position " + std::to_string(i));
    const std::string key = generations[i].bucket.value_or(std::string(kNoBucket));
    auto& cell = acc[key];
    ++cell.first;
    cell.second += accuracy(judgments.subspan(i, 1));
  }
  BucketTable table;
  for (const auto& [key, cell] : acc)
    table[key] = BucketCell{cell.first, cell.second / static_cast<double>(cell.first)};
  return table;
}

CopyTable copy_similarity(std::span<const GenerationRecord> generations, std::span<const ShapedExample> inputs,
                          const Vocabulary& vocab) {
  std::unordered_map<std::string_view, const ShapedExample*> by_id;
  for (const auto& s : inputs) by_id.emplace(s.example_id, &s);
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;
  std::size_t columns = 4;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (const auto& g : generations) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw Error("copy_similarity: no shaped input for generation " + g.id);
    const auto contexts = context_candidates(it->second->input_ids, vocab);
    columns = std::min(columns, contexts.size());
    std::vector<double> row;
    for (std::size_t c = 0; c < std::min<std::size_t>(4, contexts.size()); ++c) {
      const std::string ref = vocab.decode(contexts[c]);
      row.push_back(bleu(g.text, {ref}));
    }
    rows.emplace_back(g.bucket.value_or(std::string(kNoBucket)), std::move(row));
  }
  for (const auto& [key, row] : rows) {
    auto& cell = sums[key];
    if (cell.first.empty()) cell.first.assign(columns, 0.0);
    for (std::size_t c = 0; c < columns; ++c) cell.first[c] += row[c];
    ++cell.second;
  }
  CopyTable table;
  for (auto& [key, cell] : sums) {
    cell.first.resize(columns);
    for (double& v : cell.first) v /= static_cast<double>(cell.second);
    table[key] = cell.first;
  }
  return table;
}

// --- correlation -------------------------------------------------------------------

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("pearson: inputs differ in length");
  if (xs.size() < 2) throw Error("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("spearman: inputs differ in length");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

std::optional<double> bucket_order_correlation(const BucketTable& table, int levels) {
  std::vector<double> confidence, acc;
  for (int i = levels; i >= 1; --i) {
    auto it = table.find(bucket_token(i, levels));
    if (it == table.end() || it->second.count == 0) continue;
    confidence.push_back(static_cast<double>(i));
    acc.push_back(it->second.accuracy);
  }
  if (confidence.size() < 2) return std::nullopt;
  if (std::all_of(acc.begin(), acc.end(), [&](double a) { return a == acc.front(); })) return std::nullopt;
  return spearman(confidence, acc);
}

// --- report --------------------------------------------------------------------------

std::string to_json(const EvalReport& r) {
  ordered_json j;
  j["accuracy"] = r.accuracy;
  j["n"] = r.n;
  j["p_at_1"] = r.p_at_1 ? ordered_json(*r.p_at_1) : ordered_json(nullptr);
  ordered_json b = ordered_json::object();
  b["vs_gold"] = r.bleu_vs_gold ? ordered_json(*r.bleu_vs_gold) : ordered_json(nullptr);
  b["vs_as2_top"] = r.bleu_vs_as2_top ? ordered_json(*r.bleu_vs_as2_top) : ordered_json(nullptr);
  j["bleu"] = b;
  ordered_json bt = ordered_json::object();
  for (const auto& [k, c] : r.bucket_table) bt[k] = {{"count", c.count}, {"accuracy", c.accuracy}};
  j["bucket_table"] = bt;
  ordered_json ct = ordered_json::object();
  for (const auto& [k, v] : r.copy_table) ct[k] = v;
  j["copy_table"] = ct;
  ordered_json corr = ordered_json::object();
  for (const auto& [k, v] : r.correlations) corr[k] = v;
  j["correlations"] = corr;
  ordered_json echo = ordered_json::object();
  for (const auto& [k, v] : r.config_echo) echo[k] = v;
  j["config_echo"] = echo;
  return j.dump(2) + "\n";
}

EvalReport parse_report(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.n = j.value("n", std::size_t{0});
    auto opt = [](const nlohmann::json& v) -> std::optional<double> {
      if (v.is_null()) return std::nullopt;
      return v.get<double>();
    };
    if (j.contains("p_at_1")) r.p_at_1 = opt(j["p_at_1"]);
    if (j.contains("bleu")) {
      const auto& b = j["bleu"];
      if (b.contains("vs_gold")) r.bleu_vs_gold = opt(b["vs_gold"]);
      if (b.contains("vs_as2_top")) r.bleu_vs_as2_top = opt(b["vs_as2_top"]);
    }
    for (const auto& [k, v] : j.at("bucket_table").items())
      r.bucket_table[k] = BucketCell{v.at("count").get<std::size_t>(), v.at("accuracy").get<double>()};
    for (const auto& [k, v] : j.at("copy_table").items()) r.copy_table[k] = v.get<std::vector<double>>();
    for (const auto& [k, v] : j.at("correlations").items()) r.correlations[k] = v.get<double>();
    if (j.contains("config_echo"))
      for (const auto& [k, v] : j["config_echo"].items()) r.config_echo[k] = v.get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
}

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "questions        " << r.n << "\n";
  out << "accuracy         " << r.accuracy << "\n";
  if (r.p_at_1) out << "teacher P@1      " << *r.p_at_1 << "\n";
  out << std::setprecision(2);
  if (r.bleu_vs_gold) out << "BLEU vs gold     " << *r.bleu_vs_gold << "\n";
  if (r.bleu_vs_as2_top) out << "BLEU vs AS2 top  " << *r.bleu_vs_as2_top << "\n";
  if (!r.bucket_table.empty()) {
    out << "\n" << std::left << std::setw(14) << "bucket" << std::right << std::setw(8) << "count" << std::setw(10)
        << "accuracy" << "\n";
    for (const auto& [k, c] : r.bucket_table)
      out << std::left << std::setw(14) << k << std::right << std::setw(8) << c.count << std::setw(10)
          << std::setprecision(4) << c.accuracy << "\n";
  }
  if (!r.copy_table.empty()) {
    out << "\n" << std::left << std::setw(14) << "copy BLEU" << std::right;
    std::size_t cols = 0;
    for (const auto& [k, v] : r.copy_table) cols = std::max(cols, v.size());
    for (std::size_t c = 0; c < cols; ++c) out << std::setw(9) << ("cand" + std::to_string(c + 1));
    out << "\n";
    for (const auto& [k, v] : r.copy_table) {
      out << std::left << std::setw(14) << k << std::right << std::setprecision(2);
      for (double x : v) out << std::setw(9) << x;
      out << "\n";
    }
  }
  if (!r.correlations.empty()) {
    out << "\n";
    for (const auto& [k, v] : r.correlations)
      out << std::left << std::setw(28) << k << std::right << std::setprecision(4) << v << "\n";
  }
  return out.str();
}

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(report));
}

// --- annotation CSV --------------------------------------------------------------

std::vector<AnnotationRow> annotation_rows(std::span<const GenerationRecord> generations,
                                           std::span<const QAExample> corpus) {
  std::unordered_map<std::string_view, const QAExample*> by_id;
  for (const auto& e : corpus) by_id.emplace(e.id, &e);
  std::vector<AnnotationRow> rows;
  for (const auto& g : generations) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw Error("annotation export: generation id " + g.id + " not in corpus");
    AnnotationRow row{it->second->question, g.text, "", g.id};
    for (const auto& c : it->second->candidates)
      if (c.gold_label.value_or(false)) {
        row.reference = c.text;
        break;
      }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(std::span<const AnnotationRow> rows) {
  std::string out = "question,answer,reference,example_id\r\n";
  for (const auto& r : rows)
    out += csv_field(r.question) + "," + csv_field(r.answer) + "," + csv_field(r.reference) + "," +
           csv_field(r.example_id) + "\r\n";
  return out;
}

std::vector<AnnotationRow> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false, any = false;
  auto end_record = [&] {
    fields.push_back(std::move(field));
    field.clear();
    records.push_back(std::move(fields));
    fields.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error("csv: unterminated quoted field");
  if (any || !field.empty() || !fields.empty()) end_record();
  if (records.empty()) throw Error("csv: missing header");
  const std::vector<std::string> header{"question", "answer", "reference", "example_id"};
  if (records.front() != header) throw Error("csv: unexpected header");
  std::vector<AnnotationRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.size() != 4) throw Error("csv: row " + std::to_string(i + 1) + " has " + std::to_string(r.size()) + " fields");
    rows.push_back(AnnotationRow{r[0], r[1], r[2], r[3]});
  }
  return rows;
}

void emit_annotation_csv(std::span<const GenerationRecord> generations, std::span<const QAExample> corpus,
                         const std::filesystem::path& path) {
  const auto rows = annotation_rows(generations, corpus);
  write_file_atomic(path, to_csv(rows));
}

std::map<std::string, double> read_metric_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metric scores file " + path.string());
  std::map<std::string, double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_tokens(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto id = j.at("id").get<std::string>();
      if (!out.emplace(id, j.at("score").get<double>()).second)
        throw FormatError(line_no, "id", "duplicate id " + id);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(line_no, "score", e.what());
    }
  }
  return out;
}

}  // namespace genqa
