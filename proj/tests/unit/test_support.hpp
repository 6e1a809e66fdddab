#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <functional>
#include <mutex>
#include <string>
#include <unistd.h>

#include "socialveil/backend.hpp"
#include "socialveil/barrier.hpp"
#include "socialveil/core.hpp"
#include "socialveil/json_io.hpp"
#include "socialveil/resources.hpp"

namespace testing_support {

using namespace socialveil;

inline std::filesystem::path fixtures() { return SOCIALVEIL_FIXTURES; }

inline Episode make_episode(BarrierType b, const std::string& id = "ep-1") {
  Episode e;
  e.id = id;
  e.scenario.id = "sc-1";
  e.scenario.raw_description = "A landlord wants to raise the rent while the tenant wants repairs.";
  e.scenario.neutral_description = "Two people meet to talk about an apartment.";
  e.scenario.difficulty = Difficulty::kHard;
  e.barrier_agent = {"Ava Brooks", 40, "woman", "landlord", "Owns a small building.",
                     "The roof leak was reported last spring."};
  e.partner_agent = {"Noah Kim", 29, "man", "nurse", "Rents the top-floor unit.",
                     "Has a job offer in another city."};
  e.barrier_goal = {"Raise the rent by ten percent.", "Taxes went up."};
  e.partner_goal = {"Get the roof fixed before winter.", "Water drips into the bedroom."};
  e.barrier = builtin_taxonomy().spec_for(b);
  e.first_speaker = Role::kPartner;
  e.max_turns = 20;
  return e;
}

inline Transcript make_transcript(const std::string& id, int turns, Role first = Role::kPartner) {
  Transcript t;
  t.episode_id = id;
  for (int i = 0; i < turns; ++i) {
    Role r = i % 2 == 0 ? first : other(first);
    t.turns.push_back({i, r, AgentAction::speak("line " + std::to_string(i))});
  }
  t.termination = Termination::kTurnCap;
  return t;
}

inline std::string slurp(const std::filesystem::path& p) { return read_file(p); }

// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("socialveil-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Records every request; answers through a callback.
class RecordingBackend : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit RecordingBackend(Fn fn, std::string model = "rec") : fn_(std::move(fn)), model_(model) {}
  Completion complete(const ChatRequest& r) override {
    std::string text = fn_(r);
    std::lock_guard lock(mu_);
    requests.push_back(r);
    return {text, id(), 0.0, 0, {}};
  }
  std::string id() const override { return "rec:" + model_; }
  std::string model_id() const override { return model_; }
  std::vector<ChatRequest> requests;

 private:
  Fn fn_;
  std::string model_;
  std::mutex mu_;
};

}  // namespace testing_support
