#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "tabret/common.hpp"
#include "tabret/corpus.hpp"
#include "tabret/synth.hpp"

namespace fixture {

// Two small tables sharing entities; "Sydney" appears in two rows of the
// bids table.
inline tabret::Corpus bids_corpus() {
  using namespace tabret;
  std::vector<Table> tables = {
      {"t_bids", "2000 Summer Olympics bids", {"City", "Round 1", "Round 2"},
       {{"Sydney", "30", "30"}, {"Beijing", "32", "37"}, {"Manchester", "11", "13"}, {"Sydney", "12", "40"}}},
      {"t_funding", "Research funding", {"Institute", "Funding"},
       {{"Ranmore", "19.2%"}, {"France Lab", "15.62%"}, {"Delta", "14.7%"}}},
  };
  std::vector<Passage> passages = {
      {"p_syd", "Sydney", "Sydney is a city in Australia."},
      {"p_bei", "Beijing", "Beijing is the capital of China."},
      {"p_fr", "France Lab", "France Lab studies materials."},
  };
  std::vector<EntityLink> links = {
      {"t_bids", 0, "p_syd"}, {"t_bids", 1, "p_bei"}, {"t_bids", 3, "p_syd"}, {"t_funding", 1, "p_fr"},
  };
  return Corpus(tables, passages, links);
}

// Generated corpus with blocks and resolved instances, built in memory.
struct World {
  tabret::synth::SynthData data;
  tabret::BlockStore blocks;
  std::vector<tabret::QAInstance> instances;

  std::vector<tabret::QAInstance> split(const std::string& name) const {
    std::vector<tabret::QAInstance> out;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      if (data.questions[i].split == name) out.push_back(instances[i]);
    }
    return out;
  }
};

inline World make_world(const tabret::synth::SynthConfig& config) {
  World w;
  w.data = tabret::synth::generate(config);
  w.blocks = tabret::build_fused_blocks(tabret::Corpus(w.data.tables, w.data.passages, w.data.links));
  for (const auto& q : w.data.questions) {
    w.instances.push_back(tabret::make_instance(q.question_id, q.question, q.answer, q.table_id, q.oracle_block, w.blocks));
  }
  return w;
}

inline tabret::synth::SynthConfig small_synth(std::uint64_t seed = 2024) {
  tabret::synth::SynthConfig c;
  c.seed = seed;
  c.n_tables = 80;
  c.n_questions = 900;
  return c;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tabret-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture

