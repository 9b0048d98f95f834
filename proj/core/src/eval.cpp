#include "xlenc/eval.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xlenc/random.hpp"

namespace xlenc::eval {

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::vector<LabelledExample> read_labelled_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open labelled dataset " + path.string());
  std::vector<LabelledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(where + "not a JSON object");
    if (!j.contains("text") || !j["text"].is_string()) throw DataError(where + "\"text\" must be a string");
    if (!j.contains("label")) throw DataError(where + "missing \"label\"");
    std::string label = j["label"].is_string() ? j["label"].get<std::string>() : j["label"].dump();
    if (label.empty()) throw DataError(where + "empty label");
    out.push_back({j["text"].get<std::string>(), std::move(label)});
  }
  return out;
}

template <class T>
EncodingReport weighted_avg_cosine(const Matrix<T>& embeddings, std::span<const std::string> labels,
                                   std::size_t subsample_limit, std::uint64_t seed) {
  if (embeddings.rows != labels.size()) throw ContractError("weighted_avg_cosine: one label per embedding required");
  if (labels.size() < 2) throw ContractError("weighted_avg_cosine: need at least two examples");
  if (subsample_limit < 2) throw ContractError("weighted_avg_cosine: subsample limit must be >= 2");

  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

  EncodingReport report;
  report.n_examples = labels.size();
  report.subsample_limit = subsample_limit;
  report.subsample_seed = seed;
  std::size_t contributing = 0;
  for (auto& [label, idx] : members) {
    if (idx.size() < 2) {
      report.excluded_singletons.push_back(label);
      continue;
    }
    ClassScore score;
    score.label = label;
    score.size = idx.size();
    if (idx.size() > subsample_limit) {
      Rng rng(derive_seed(seed, label));
      const auto perm = permutation(idx.size(), rng);
      std::vector<std::size_t> chosen;
      for (std::size_t k = 0; k < subsample_limit; ++k) chosen.push_back(idx[perm[k]]);
      std::sort(chosen.begin(), chosen.end());
      idx = std::move(chosen);
    }
    score.evaluated = idx.size();
    double sum = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) sum += cosine<T>(embeddings.row(idx[a]), embeddings.row(idx[b]));
    }
    const double pairs = static_cast<double>(idx.size()) * static_cast<double>(idx.size() - 1) / 2.0;
    score.mean_similarity = sum / pairs;
    contributing += score.size;
    report.classes.push_back(std::move(score));
  }
  if (report.classes.empty()) throw DataError("weighted_avg_cosine: no class has two or more members");
  for (auto& c : report.classes) {
    c.weight = static_cast<double>(c.size) / static_cast<double>(contributing);
    report.d_avg += c.weight * c.mean_similarity;
  }
  return report;
}

template <class T>
MatchOutcome match_outcome(const Matrix<T>& english, const Matrix<T>& translated, Direction direction) {
  if (english.rows != translated.rows || english.cols != translated.cols) {
    throw ContractError("match_accuracy: E and T must have the same shape");
  }
  if (english.rows == 0) throw ContractError("match_accuracy: empty test set");
  const Matrix<T>& anchors = direction == Direction::kEnToT ? english : translated;
  const Matrix<T>& candidates = direction == Direction::kEnToT ? translated : english;

  MatchOutcome out;
  out.n = english.rows;
  for (std::size_t i = 0; i < out.n; ++i) {
    const double own = cosine<T>(anchors.row(i), candidates.row(i));
    bool correct = true;
    bool tied = false;
    for (std::size_t j = 0; j < out.n && correct; ++j) {
      if (j == i) continue;
      const double other = cosine<T>(anchors.row(i), candidates.row(j));
      if (other > own) correct = false;
      if (other == own) tied = true;
    }
    if (correct) {
      ++out.correct;
      if (tied) ++out.ties;
    }
  }
  return out;
}

bool MatchReport::tie_warning() const {
  return n_pairs > 0 && static_cast<double>(en_t_ties + t_en_ties) > 0.01 * 2.0 * static_cast<double>(n_pairs);
}

MatchReport make_match_report(const MatchOutcome& en_t, const MatchOutcome& t_en) {
  MatchReport r;
  r.n_pairs = en_t.n;
  r.en_t_accuracy = en_t.accuracy();
  r.t_en_accuracy = t_en.accuracy();
  r.average = (r.en_t_accuracy + r.t_en_accuracy) / 2.0;
  r.en_t_ties = en_t.ties;
  r.t_en_ties = t_en.ties;
  return r;
}

nlohmann::json MatchReport::to_json() const {
  return {{"en_t_accuracy", en_t_accuracy}, {"t_en_accuracy", t_en_accuracy}, {"average", average},
          {"n_pairs", n_pairs},             {"en_t_ties", en_t_ties},         {"t_en_ties", t_en_ties},
          {"tie_warning", tie_warning()}};
}

MatchReport MatchReport::from_json(const nlohmann::json& j) {
  MatchReport r;
  j.at("en_t_accuracy").get_to(r.en_t_accuracy);
  j.at("t_en_accuracy").get_to(r.t_en_accuracy);
  j.at("average").get_to(r.average);
  j.at("n_pairs").get_to(r.n_pairs);
  r.en_t_ties = j.value("en_t_ties", std::size_t{0});
  r.t_en_ties = j.value("t_en_ties", std::size_t{0});
  return r;
}

nlohmann::json EncodingReport::to_json() const {
  nlohmann::json classes_json = nlohmann::json::array();
  for (const auto& c : classes) {
    classes_json.push_back({{"label", c.label},
                            {"size", c.size},
                            {"evaluated", c.evaluated},
                            {"mean_similarity", c.mean_similarity},
                            {"weight", c.weight}});
  }
  return {{"task", "encoding"},
          {"d_avg", d_avg},
          {"classes", classes_json},
          {"excluded_singletons", excluded_singletons},
          {"n_examples", n_examples},
          {"pair_convention", kPairConvention},
          {"subsample_limit", subsample_limit},
          {"subsample_seed", subsample_seed}};
}

EncodingReport EncodingReport::from_json(const nlohmann::json& j) {
  EncodingReport r;
  j.at("d_avg").get_to(r.d_avg);
  for (const auto& c : j.at("classes")) {
    r.classes.push_back({c.at("label").get<std::string>(), c.at("size").get<std::size_t>(),
                         c.at("evaluated").get<std::size_t>(), c.at("mean_similarity").get<double>(),
                         c.at("weight").get<double>()});
  }
  j.at("excluded_singletons").get_to(r.excluded_singletons);
  j.at("n_examples").get_to(r.n_examples);
  r.subsample_limit = j.value("subsample_limit", kDefaultSubsampleLimit);
  r.subsample_seed = j.value("subsample_seed", std::uint64_t{0});
  return r;
}

MatchReport run_matching_eval(const encoder::Student& student, std::span<const corpus::ParallelPair> testset) {
  if (testset.empty()) throw DataError("run_matching_eval: empty test set");
  std::vector<std::string> en, t;
  for (const auto& p : testset) {
    en.push_back(p.english);
    t.push_back(p.translated);
  }
  return match_report(student.embed(en), student.embed(t));
}

EncodingReport run_encoding_eval(const encoder::Student& student, std::span<const LabelledExample> dataset,
                                 std::size_t subsample_limit, std::uint64_t seed) {
  std::vector<std::string> texts, labels;
  for (const auto& e : dataset) {
    texts.push_back(e.text);
    labels.push_back(e.label);
  }
  return weighted_avg_cosine(student.embed(texts), std::span<const std::string>(labels), subsample_limit, seed);
}

std::vector<Neighbor> knn(std::span<const float> query, const EmbeddingTable& index, std::size_t k) {
  if (index.size() == 0) throw DataError("knn: index is empty");
  if (k == 0) throw ContractError("knn: k must be >= 1");
  std::vector<double> sims(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    sims[i] = cosine<float>(query, std::span<const float>(index.vectors[i]));
  }
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  order.resize(std::min(k, order.size()));
  std::vector<Neighbor> out;
  for (auto i : order) out.push_back({i, index.sentences[i], sims[i]});
  return out;
}

std::vector<Neighbor> knn(const std::string& query, const encoder::Student& student, const EmbeddingTable& index,
                          std::size_t k) {
  const auto q = student.embed_one(query);
  return knn(std::span<const float>(q), index, k);
}

std::vector<std::size_t> MatchingTable::best_models(const std::string& language) const {
  const auto it = rows.find(language);
  if (it == rows.end() || it->second.empty()) return {};
  double best = it->second.front().average;
  for (const auto& r : it->second) best = std::max(best, r.average);
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < it->second.size(); ++m) {
    if (it->second[m].average == best) out.push_back(m);
  }
  return out;
}

nlohmann::json MatchingTable::to_json() const {
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& lang : languages) {
    nlohmann::json results = nlohmann::json::array();
    const auto& reports = rows.at(lang);
    for (std::size_t m = 0; m < reports.size(); ++m) {
      auto r = reports[m].to_json();
      r["model"] = models[m];
      results.push_back(std::move(r));
    }
    langs.push_back({{"lang", lang}, {"results", results}, {"best", best_models(lang)}});
  }
  return {{"task", "matching"},
          {"columns", {"en-t acc.", "t-en acc.", "avg."}},
          {"models", models},
          {"languages", langs}};
}

MatchingTable MatchingTable::from_json(const nlohmann::json& j) {
  MatchingTable t;
  j.at("models").get_to(t.models);
  for (const auto& row : j.at("languages")) {
    const auto lang = row.at("lang").get<std::string>();
    t.languages.push_back(lang);
    auto& reports = t.rows[lang];
    for (const auto& r : row.at("results")) reports.push_back(MatchReport::from_json(r));
  }
  return t;
}

std::string MatchingTable::to_text(bool color) const {
  constexpr std::size_t kAccWidth = 11;  // "en-t acc." plus gap
  constexpr std::size_t kAvgWidth = 7;   // "0.0000" plus its mark
  constexpr std::size_t kGroupWidth = 2 * kAccWidth + kAvgWidth;
  std::size_t lang_width = std::string("Language").size();
  for (const auto& l : languages) lang_width = std::max(lang_width, l.size());

  std::vector<std::string> lines;
  std::string title = pad_right("", lang_width);
  std::string header = pad_right("Language", lang_width);
  std::string rule(lang_width, '-');
  for (const auto& m : models) {
    const std::size_t group = std::max(kGroupWidth, m.size());
    title += " | " + pad_right(m, group);
    header += " | " + pad_right("en-t acc.", kAccWidth) + pad_right("t-en acc.", kAccWidth) +
              pad_right("avg.", group - 2 * kAccWidth);
    rule += "-+-" + std::string(group, '-');
  }
  lines.push_back(title);
  lines.push_back(header);
  lines.push_back(rule);

  for (const auto& lang : languages) {
    const auto& reports = rows.at(lang);
    const auto best = best_models(lang);
    std::string line = pad_right(lang, lang_width);
    for (std::size_t m = 0; m < reports.size(); ++m) {
      const auto& r = reports[m];
      const bool is_best = models.size() > 1 && std::find(best.begin(), best.end(), m) != best.end();
      const bool shared = is_best && best.size() > 1;
      std::string avg = fixed4(r.average);
      const std::size_t visible = avg.size() + 1;
      if (is_best && color) avg = (shared ? "\x1b[4m" : "\x1b[1m") + avg + "\x1b[0m";
      avg += is_best ? (shared ? '=' : '*') : ' ';
      const std::size_t width = std::max(kGroupWidth, models[m].size()) - 2 * kAccWidth;
      line += " | " + pad_right(fixed4(r.en_t_accuracy), kAccWidth) + pad_right(fixed4(r.t_en_accuracy), kAccWidth) +
              avg + std::string(width > visible ? width - visible : 0, ' ');
    }
    lines.push_back(line);
  }
  for (const auto& lang : languages) {
    for (std::size_t m = 0; m < rows.at(lang).size(); ++m) {
      if (rows.at(lang)[m].tie_warning()) {
        lines.push_back("warning: more than 1% tied decisions for " + lang + " (" + models[m] + ")");
      }
    }
  }
  if (models.size() > 1) lines.push_back("* best average for the language; = best average shared by several models");

  std::string out;
  for (auto& l : lines) {
    while (!l.empty() && l.back() == ' ') l.pop_back();
    out += l + '\n';
  }
  return out;
}

std::string encoding_report_text(const EncodingReport& report) {
  std::size_t width = std::string("Class").size();
  for (const auto& c : report.classes) width = std::max(width, c.label.size());
  std::ostringstream out;
  out << pad_right("Class", width) << "  " << pad_right("size", 8) << pad_right("used", 8) << pad_right("mean cos", 10)
      << "weight\n";
  out << std::string(width + 34, '-') << '\n';
  for (const auto& c : report.classes) {
    out << pad_right(c.label, width) << "  " << pad_right(std::to_string(c.size), 8)
        << pad_right(std::to_string(c.evaluated), 8) << pad_right(fixed4(c.mean_similarity), 10) << fixed4(c.weight)
        << '\n';
  }
  out << "D_avg: " << fixed4(report.d_avg) << '\n';
  out << "pairs: " << kPairConvention << '\n';
  if (!report.excluded_singletons.empty()) {
    out << "excluded singleton classes:";
    for (const auto& l : report.excluded_singletons) out << ' ' << l;
    out << '\n';
  }
  return out.str();
}

template EncodingReport weighted_avg_cosine<float>(const Matrix<float>&, std::span<const std::string>, std::size_t,
                                                   std::uint64_t);
template EncodingReport weighted_avg_cosine<double>(const Matrix<double>&, std::span<const std::string>, std::size_t,
                                                    std::uint64_t);
template MatchOutcome match_outcome<float>(const Matrix<float>&, const Matrix<float>&, Direction);
template MatchOutcome match_outcome<double>(const Matrix<double>&, const Matrix<double>&, Direction);

}  // namespace xlenc::eval
