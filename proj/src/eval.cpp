#include "cogenav/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cogenav/errors.hpp"
#include "cogenav/sync.hpp"

namespace cogenav {

int edit_distance(const TokenSequence& a, const TokenSequence& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer(const TokenSequence& reference, const TokenSequence& hypothesis, const Vocabulary& vocab) {
  const TokenSequence ref = vocab.strip(reference), hyp = vocab.strip(hypothesis);
  require(!ref.empty(), ErrorCode::kUndefinedMetric, "wer: empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

double sync_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), ErrorCode::kBatch, "sync_auc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks (1-based) over tie groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(n) - pos;
  require(pos > 0.0 && neg > 0.0, ErrorCode::kUndefinedMetric, "sync_auc: both classes must be present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

void heatmap_export(const Matrix& s, const std::filesystem::path& stem) {
  for (double v : s.data) require(std::isfinite(v), ErrorCode::kNonFinite, "heatmap_export: non-finite entry");
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto csv_path = std::filesystem::path(stem.string() + ".csv");
  std::ofstream csv(csv_path, std::ios::trunc);
  require(csv.good(), ErrorCode::kIo, "cannot write " + csv_path.string());
  csv << "# rows=audio_frames:" << s.rows << " cols=video_frames:" << s.cols << " values=cosine gray=(s+1)*127.5\n";
  csv.precision(17);
  for (int i = 0; i < s.rows; ++i) {
    for (int j = 0; j < s.cols; ++j) csv << (j ? "," : "") << s(i, j);
    csv << '\n';
  }
  require(csv.good(), ErrorCode::kIo, "write failed: " + csv_path.string());

  const auto pgm_path = std::filesystem::path(stem.string() + ".pgm");
  std::ofstream pgm(pgm_path, std::ios::binary | std::ios::trunc);
  require(pgm.good(), ErrorCode::kIo, "cannot write " + pgm_path.string());
  pgm << "P5\n" << s.cols << ' ' << s.rows << "\n255\n";
  for (double v : s.data) {
    const double g = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    pgm.put(static_cast<char>(static_cast<unsigned char>(g)));
  }
  require(pgm.good(), ErrorCode::kIo, "write failed: " + pgm_path.string());
}

Matrix read_heatmap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
    require(rows.empty() || r.size() == rows.front().size(), ErrorCode::kFormat, "heatmap csv: ragged rows");
    rows.push_back(std::move(r));
  }
  Matrix m(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows.front().size()));
  for (int i = 0; i < m.rows; ++i) std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  return m;
}

double diagonal_dominance(const Matrix& s, int band) {
  require(s.rows == s.cols && s.rows >= 1, ErrorCode::kShape, "diagonal_dominance: matrix must be square");
  require(band >= 0 && band < s.rows, ErrorCode::kConfig, "diagonal_dominance: band must be in [0, T)");
  double in_sum = 0.0, out_sum = 0.0;
  int in_n = 0, out_n = 0;
  for (int i = 0; i < s.rows; ++i)
    for (int j = 0; j < s.cols; ++j) {
      if (std::abs(i - j) <= band) {
        in_sum += s(i, j);
        ++in_n;
      } else {
        out_sum += s(i, j);
        ++out_n;
      }
    }
  return in_sum / in_n - (out_n ? out_sum / out_n : 0.0);
}

const char* task_name(Task t) {
  switch (t) {
    case Task::kVSR: return "VSR";
    case Task::kAVSRClean: return "AVSR_clean";
    case Task::kAVSRNoisy: return "AVSR_noisy";
    case Task::kSync: return "SYNC";
    case Task::kASDLite: return "ASD_lite";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (u == "vsr") return Task::kVSR;
  if (u == "avsr_clean") return Task::kAVSRClean;
  if (u == "avsr_noisy") return Task::kAVSRNoisy;
  if (u == "sync") return Task::kSync;
  if (u == "asd_lite" || u == "asd") return Task::kASDLite;
  fail(ErrorCode::kConfig, "unknown task: " + s);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json c = {{"snr_db", std::isfinite(conditions.snr_db) ? nlohmann::json(conditions.snr_db)
                                                                   : nlohmann::json(std::isnan(conditions.snr_db) ? "none" : "clean")},
                      {"beam", conditions.beam},
                      {"split", conditions.split},
                      {"checkpoint_id", conditions.checkpoint_id}};
  return {{"task", task}, {"metric_name", metric_name}, {"value", value}, {"conditions", c}, {"extra", extra}};
}

void append_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  require(out.good(), ErrorCode::kIo, "cannot append to " + path.string());
  out << report.to_json().dump() << '\n';
}

Matrix alignment_matrix(const CoGenAV& model, const UtteranceSample& s) {
  return similarity_matrix(model.features(&s.mel, nullptr, Mode::kA), model.features(nullptr, &s.video, Mode::kV));
}

double mean_dominance(const CoGenAV& model, const std::vector<UtteranceSample>& samples, int band) {
  std::vector<double> d(samples.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < samples.size(); ++i) d[i] = diagonal_dominance(alignment_matrix(model, samples[i]), band);
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

namespace {

struct WerTotals {
  int edits = 0;
  int ref_len = 0;
  double rate() const { return ref_len ? static_cast<double>(edits) / ref_len : 0.0; }
};

// Corpus-level WER: summed edits over summed reference length.
template <typename Decode>
WerTotals corpus_wer(const std::vector<UtteranceSample>& samples, const Vocabulary& vocab, Decode decode) {
  std::vector<int> edits(samples.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < samples.size(); ++i)
    edits[i] = edit_distance(vocab.strip(samples[i].tokens), vocab.strip(decode(i)));
  WerTotals t;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    t.edits += edits[i];
    t.ref_len += static_cast<int>(samples[i].tokens.size());
  }
  return t;
}

double pair_score(const CoGenAV& model, const Matrix& mel, const LipClip& video) {
  return frame_similarity(model.features(&mel, nullptr, Mode::kA), model.features(nullptr, &video, Mode::kV)).d_bar;
}

}  // namespace

EvalReport evaluate_task(Task task, const CoGenAV& model, const std::vector<UtteranceSample>& split_in,
                         const EvalConditions& cond) {
  require(!split_in.empty(), ErrorCode::kConfig, "evaluate_task: empty split");
  require(cond.beam >= 1, ErrorCode::kConfig, "evaluate_task: beam must be >= 1");
  std::vector<UtteranceSample> split = split_in;
  if (cond.max_utterances > 0 && static_cast<int>(split.size()) > cond.max_utterances) split.resize(cond.max_utterances);
  const int n = static_cast<int>(split.size());
  const Vocabulary& vocab = model.head().vocab();

  EvalReport rep;
  rep.task = task_name(task);
  rep.conditions = cond;
  rep.extra["utterances"] = n;

  switch (task) {
    case Task::kVSR: {
      const auto t = corpus_wer(split, vocab, [&](std::size_t i) {
        return model.transcribe(nullptr, &split[i].video, Mode::kV, cond.beam);
      });
      rep.metric_name = "wer";
      rep.value = t.rate();
      break;
    }
    case Task::kAVSRNoisy: {
      require(!std::isnan(cond.snr_db), ErrorCode::kConfig, "AVSR_noisy requires snr_db");
      require(n >= 2, ErrorCode::kConfig, "AVSR_noisy needs at least 2 utterances for babble");
      std::vector<Matrix> noisy(split.size());
      std::mt19937_64 rng(mix_seed(cond.seed, 11));
      for (int i = 0; i < n; ++i) {
        int other = std::uniform_int_distribution<int>(0, n - 2)(rng);
        if (other >= i) ++other;
        noisy[i] = mix_noise(split[i].mel, fit_noise(split[other].mel, split[i].mel.rows),
                             cond.snr_db);
      }
      const auto av = corpus_wer(split, vocab, [&](std::size_t i) {
        return model.transcribe(&noisy[i], &split[i].video, Mode::kAV, cond.beam);
      });
      const auto a = corpus_wer(split, vocab, [&](std::size_t i) {
        return model.transcribe(&noisy[i], nullptr, Mode::kA, cond.beam);
      });
      rep.metric_name = "wer";
      rep.value = av.rate();
      rep.extra["audio_only_wer"] = a.rate();
      break;
    }
    case Task::kAVSRClean: {
      require(model.cross_adapter() != nullptr, ErrorCode::kMissingArtifact,
              "AVSR_clean needs a trained cross-attention adapter in the checkpoint");
      const auto cross = corpus_wer(split, vocab, [&](std::size_t i) {
        Graph g(false);
        return model.head().transcribe(to_matrix(model.cross_memory(g, split[i].mel, split[i].video)), cond.beam);
      });
      const auto audio = corpus_wer(split, vocab, [&](std::size_t i) {
        Graph g(false);
        return model.head().transcribe(to_matrix(model.head().stem(g, split[i].mel)), cond.beam);
      });
      rep.metric_name = "wer";
      rep.value = cross.rate();
      rep.extra["audio_only_wer"] = audio.rate();
      break;
    }
    case Task::kSync: {
      require(n >= 2, ErrorCode::kConfig, "SYNC needs at least 2 utterances");
      const auto pairs = make_pairs(split, 0.5, 2, mix_seed(cond.seed, 12));
      std::vector<double> scores(pairs.size());
      std::vector<int> labels(pairs.size());
#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        scores[i] = pair_score(model, pairs[i].mel, pairs[i].video);
        labels[i] = pairs[i].label;
      }
      rep.metric_name = "auc";
      rep.value = sync_auc(scores, labels);
      rep.extra["pairs"] = pairs.size();
      break;
    }
    case Task::kASDLite: {
      require(cond.candidates >= 2 && n >= cond.candidates, ErrorCode::kConfig,
              "ASD_lite needs candidates >= 2 and at least that many utterances");
      std::mt19937_64 rng(mix_seed(cond.seed, 13));
      std::vector<std::vector<int>> tracks(split.size());
      for (int i = 0; i < n; ++i) {
        tracks[i].push_back(i);
        while (static_cast<int>(tracks[i].size()) < cond.candidates) {
          const int j = std::uniform_int_distribution<int>(0, n - 1)(rng);
          if (std::find(tracks[i].begin(), tracks[i].end(), j) == tracks[i].end()) tracks[i].push_back(j);
        }
        std::shuffle(tracks[i].begin(), tracks[i].end(), rng);
      }
      std::vector<int> hit(split.size());
#pragma omp parallel for schedule(dynamic, 1)
      for (int i = 0; i < n; ++i) {
        int best = -1;
        double best_score = -1.0;
        for (int j : tracks[i]) {
          const int t = std::min(split[i].video.frames, split[j].video.frames);
          const double sc = pair_score(model, crop_rows(split[i].mel, 4 * t), crop_clip(split[j].video, t));
          if (sc > best_score) {
            best_score = sc;
            best = j;
          }
        }
        hit[i] = best == i;
      }
      rep.metric_name = "accuracy";
      rep.value = static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / n;
      rep.extra["candidates"] = cond.candidates;
      break;
    }
  }
  require(std::isfinite(rep.value), ErrorCode::kNonFinite, "evaluate_task: non-finite metric");
  return rep;
}

}  // namespace cogenav
