#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "selftalk/common.hpp"
#include "selftalk/evalrun.hpp"

namespace selftalk::report {

constexpr int kReportSchemaVersion = 1;

// Minimal ordered JSON emitter. Report files render every number with 17
// significant digits so text round-trips are exact, and key order is fixed by
// emission order, so identical reports are byte-identical.
class JsonWriter {
 public:
  void begin_object() {
    sep();
    out_ += '{';
    first_ = true;
  }
  void end_object() {
    out_ += '}';
    first_ = false;
  }
  void begin_array() {
    sep();
    out_ += '[';
    first_ = true;
  }
  void end_array() {
    out_ += ']';
    first_ = false;
  }
  void key(const std::string& k) {
    sep();
    out_ += '"' + escape(k) + "\":";
    first_ = true;  // suppress the comma before the value
  }
  void value(double v) {
    sep();
    out_ += format_double(v);
  }
  void value(long long v) {
    sep();
    out_ += format_int(v);
  }
  void value(long v) { value(static_cast<long long>(v)); }
  void value(int v) { value(static_cast<long long>(v)); }
  void value(const std::string& v) {
    sep();
    out_ += '"' + escape(v) + '"';
  }

  const std::string& str() const { return out_; }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default: out += c;
      }
    }
    return out;
  }

 private:
  void sep() {
    if (!first_) out_ += ',';
    first_ = false;
  }
  std::string out_;
  bool first_ = true;
};

inline void write_double_array(JsonWriter& w, const std::vector<double>& xs) {
  w.begin_array();
  for (double x : xs) w.value(x);
  w.end_array();
}

inline std::string metrics_report_json(const evalrun::MetricsReport& rep) {
  JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(kReportSchemaVersion);
  w.key("run_id");
  w.value(rep.run_id);
  w.key("rounds");
  w.value(rep.rounds);
  w.key("episode_count");
  w.value(rep.episode_count);

  w.key("diversity");
  w.begin_object();
  w.key("novel_question_count");
  w.value(rep.diversity.novel_question_count);
  w.key("unique_questions_mean");
  w.value(rep.diversity.unique_questions_mean);
  w.key("unique_questions_stderr");
  w.value(rep.diversity.unique_questions_stderr);
  w.key("mutual_overlap_mean");
  w.value(rep.diversity.mutual_overlap_mean);
  w.key("mutual_overlap_stderr");
  w.value(rep.diversity.mutual_overlap_stderr);
  w.key("ent1");
  w.value(rep.diversity.ent1);
  w.key("ent2");
  w.value(rep.diversity.ent2);
  w.key("dist1");
  w.value(rep.diversity.dist1);
  w.key("dist2");
  w.value(rep.diversity.dist2);
  w.end_object();

  w.key("relevance");
  w.begin_object();
  w.key("nll_per_token");
  w.value(rep.nll_relevance);
  w.end_object();

  w.key("retrieval");
  w.begin_object();
  w.key("ndcg");
  w.value(rep.retrieval.ndcg);
  w.key("mrr");
  w.value(rep.retrieval.mrr);
  w.key("r_at_1");
  w.value(rep.retrieval.r_at_1);
  w.key("r_at_5");
  w.value(rep.retrieval.r_at_5);
  w.key("r_at_10");
  w.value(rep.retrieval.r_at_10);
  w.key("mean_rank");
  w.value(rep.retrieval.mean_rank);
  w.key("item_count");
  w.value(rep.retrieval.item_count);
  w.end_object();

  w.key("diagnostics");
  w.begin_object();
  w.key("alt_repeat_rate");
  w.value(rep.alt_repeat_rate);
  w.key("cosine_curve");
  write_double_array(w, rep.cosine_curve);
  w.key("percentile_curve");
  write_double_array(w, rep.percentile_curve);
  w.end_object();

  w.end_object();
  return w.str() + "\n";
}

inline evalrun::MetricsReport parse_metrics_report(const std::string& text,
                                                   const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(source + ": parse error: " + e.what());
  }
  try {
    if (j.value("schema_version", -1) != kReportSchemaVersion)
      throw DataError(source + ": unsupported schema_version");
    evalrun::MetricsReport rep;
    rep.run_id = j.at("run_id").get<std::string>();
    rep.rounds = j.at("rounds").get<int>();
    rep.episode_count = j.at("episode_count").get<long>();
    const auto& d = j.at("diversity");
    rep.diversity.novel_question_count = d.at("novel_question_count").get<int>();
    rep.diversity.unique_questions_mean = d.at("unique_questions_mean").get<double>();
    rep.diversity.unique_questions_stderr = d.at("unique_questions_stderr").get<double>();
    rep.diversity.mutual_overlap_mean = d.at("mutual_overlap_mean").get<double>();
    rep.diversity.mutual_overlap_stderr = d.at("mutual_overlap_stderr").get<double>();
    rep.diversity.ent1 = d.at("ent1").get<double>();
    rep.diversity.ent2 = d.at("ent2").get<double>();
    rep.diversity.dist1 = d.at("dist1").get<double>();
    rep.diversity.dist2 = d.at("dist2").get<double>();
    rep.nll_relevance = j.at("relevance").at("nll_per_token").get<double>();
    const auto& r = j.at("retrieval");
    rep.retrieval.ndcg = r.at("ndcg").get<double>();
    rep.retrieval.mrr = r.at("mrr").get<double>();
    rep.retrieval.r_at_1 = r.at("r_at_1").get<double>();
    rep.retrieval.r_at_5 = r.at("r_at_5").get<double>();
    rep.retrieval.r_at_10 = r.at("r_at_10").get<double>();
    rep.retrieval.mean_rank = r.at("mean_rank").get<double>();
    rep.retrieval.item_count = r.at("item_count").get<long>();
    const auto& g = j.at("diagnostics");
    rep.alt_repeat_rate = g.at("alt_repeat_rate").get<double>();
    rep.cosine_curve = g.at("cosine_curve").get<std::vector<double>>();
    rep.percentile_curve = g.at("percentile_curve").get<std::vector<double>>();
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": malformed report: " + e.what());
  }
}

// Scalar metrics as (name, value) rows; curves flatten one row per round.
inline std::vector<std::pair<std::string, double>> metric_rows(
    const evalrun::MetricsReport& rep) {
  std::vector<std::pair<std::string, double>> rows = {
      {"novel_question_count", double(rep.diversity.novel_question_count)},
      {"unique_questions_mean", rep.diversity.unique_questions_mean},
      {"unique_questions_stderr", rep.diversity.unique_questions_stderr},
      {"mutual_overlap_mean", rep.diversity.mutual_overlap_mean},
      {"mutual_overlap_stderr", rep.diversity.mutual_overlap_stderr},
      {"ent1", rep.diversity.ent1},
      {"ent2", rep.diversity.ent2},
      {"dist1", rep.diversity.dist1},
      {"dist2", rep.diversity.dist2},
      {"nll_per_token", rep.nll_relevance},
      {"ndcg", rep.retrieval.ndcg},
      {"mrr", rep.retrieval.mrr},
      {"r_at_1", rep.retrieval.r_at_1},
      {"r_at_5", rep.retrieval.r_at_5},
      {"r_at_10", rep.retrieval.r_at_10},
      {"mean_rank", rep.retrieval.mean_rank},
      {"alt_repeat_rate", rep.alt_repeat_rate},
      {"episode_count", double(rep.episode_count)},
  };
  for (size_t t = 0; t < rep.cosine_curve.size(); ++t)
    rows.emplace_back("cosine_round_" + std::to_string(t + 1), rep.cosine_curve[t]);
  for (size_t t = 0; t < rep.percentile_curve.size(); ++t)
    rows.emplace_back("percentile_round_" + std::to_string(t), rep.percentile_curve[t]);
  return rows;
}

inline std::string metrics_report_csv(const evalrun::MetricsReport& rep) {
  std::string csv = "metric,value\n";
  for (const auto& [name, value] : metric_rows(rep))
    csv += name + "," + format_double(value) + "\n";
  return csv;
}

// Single-series line chart; one marker per data point.
inline std::string line_chart_svg(const std::string& title, const std::string& x_label,
                                  const std::vector<double>& xs, const std::vector<double>& ys) {
  check_contract(xs.size() == ys.size() && !xs.empty(), "svg: bad series");
  const double width = 560, height = 360;
  const double ml = 60, mr = 20, mt = 40, mb = 50;
  double ymin = ys[0], ymax = ys[0];
  for (double y : ys) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (ymax - ymin < 1e-12) {
    ymax += 0.5;
    ymin -= 0.5;
  }
  const double xmin = xs.front(), xmax = xs.back();
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin + 1e-300) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"360\" "
         "viewBox=\"0 0 560 360\">\n";
  svg += "<rect width=\"560\" height=\"360\" fill=\"white\"/>\n";
  svg += "<text x=\"280\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
         JsonWriter::escape(title) + "</text>\n";
  svg += "<text x=\"280\" y=\"350\" text-anchor=\"middle\" font-size=\"12\">" +
         JsonWriter::escape(x_label) + "</text>\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                ml, height - mb, width - mr, height - mb);
  svg += buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                ml, mt, ml, height - mb);
  svg += buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"8\" y=\"%.1f\" font-size=\"11\">%.3f</text>\n",
                py(ymax) + 4, ymax);
  svg += buf;
  std::snprintf(buf, sizeof(buf), "<text x=\"8\" y=\"%.1f\" font-size=\"11\">%.3f</text>\n",
                py(ymin) + 4, ymin);
  svg += buf;

  svg += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", i ? " " : "", px(xs[i]), py(ys[i]));
    svg += buf;
  }
  svg += "\"/>\n";
  for (size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"steelblue\"/>\n", px(xs[i]),
                  py(ys[i]));
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"10\">%g"
                  "</text>\n",
                  px(xs[i]), height - mb + 16, xs[i]);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

// Side-by-side comparison of several runs with a signed last-minus-first
// delta per metric.
inline std::string diff_report_json(const std::vector<evalrun::MetricsReport>& reports) {
  check_domain(!reports.empty(), "diff report: no input reports");
  JsonWriter w;
  w.begin_object();
  w.key("schema_version");
  w.value(kReportSchemaVersion);
  w.key("kind");
  w.value(std::string("selftalk-diff-report"));
  w.key("run_ids");
  w.begin_array();
  for (const auto& r : reports) w.value(r.run_id);
  w.end_array();
  w.key("metrics");
  w.begin_object();
  std::vector<std::vector<std::pair<std::string, double>>> rows;
  for (const auto& r : reports) rows.push_back(metric_rows(r));
  for (size_t m = 0; m < rows[0].size(); ++m) {
    w.key(rows[0][m].first);
    w.begin_object();
    w.key("values");
    w.begin_array();
    for (const auto& rr : rows) w.value(rr[m].second);
    w.end_array();
    w.key("delta");
    w.value(rows.back()[m].second - rows.front()[m].second);
    w.end_object();
  }
  w.end_object();
  w.end_object();
  return w.str() + "\n";
}

inline std::string diff_report_csv(const std::vector<evalrun::MetricsReport>& reports) {
  check_domain(!reports.empty(), "diff report: no input reports");
  std::string csv = "metric";
  for (const auto& r : reports) csv += "," + r.run_id;
  csv += ",delta\n";
  std::vector<std::vector<std::pair<std::string, double>>> rows;
  for (const auto& r : reports) rows.push_back(metric_rows(r));
  for (size_t m = 0; m < rows[0].size(); ++m) {
    csv += rows[0][m].first;
    for (const auto& rr : rows) csv += "," + format_double(rr[m].second);
    csv += "," + format_double(rows.back()[m].second - rows.front()[m].second) + "\n";
  }
  return csv;
}

}  // namespace selftalk::report
