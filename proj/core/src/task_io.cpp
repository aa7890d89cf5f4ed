#include "fbos/task_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace fbos::envs {
namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kDetail = "<detail>";

Json tokens_to_json(const std::vector<TokenId>& tokens, const Vocab& vocab) {
  Json arr = Json::array();
  for (TokenId t : tokens) arr.push_back(t == kDetailSlot ? std::string(kDetail) : vocab.name(t));
  return arr;
}

std::vector<TokenId> tokens_from_json(const Json& arr, const Vocab& vocab) {
  std::vector<TokenId> out;
  for (const auto& t : arr) {
    const auto name = t.get<std::string>();
    out.push_back(name == kDetail ? kDetailSlot : vocab.id(name));
  }
  return out;
}

}  // namespace

std::string task_to_line(const Task& task, const Vocab& vocab) {
  Json j;
  j["id"] = task.id;
  j["env"] = task.env;
  j["difficulty"] = std::string(to_string(task.difficulty));
  j["prompt"] = tokens_to_json(task.prompt, vocab);
  Json cs = Json::array();
  for (const auto& c : task.constraints) {
    Json jc;
    jc["id"] = c.id;
    jc["class"] = std::string(to_string(c.cls));
    jc["kind"] = std::string(to_string(c.kind));
    jc["position"] = c.position;
    jc["value"] = c.value;
    jc["limit"] = c.limit;
    jc["template"] = tokens_to_json(c.feedback_template, vocab);
    cs.push_back(std::move(jc));
  }
  j["constraints"] = std::move(cs);
  return j.dump();
}

Task task_from_line(const std::string& line, const Vocab& vocab) {
  const Json j = Json::parse(line);
  Task task;
  task.id = j.at("id").get<std::string>();
  task.env = j.at("env").get<std::string>();
  task.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
  task.prompt = tokens_from_json(j.at("prompt"), vocab);
  if (task.prompt.empty()) throw std::invalid_argument("task " + task.id + ": empty prompt");
  for (const auto& jc : j.at("constraints")) {
    ConstraintSpec c;
    c.id = jc.at("id").get<std::string>();
    c.cls = constraint_class_from_string(jc.at("class").get<std::string>());
    c.kind = constraint_kind_from_string(jc.at("kind").get<std::string>());
    c.position = jc.at("position").get<int>();
    c.value = jc.at("value").get<int>();
    c.limit = jc.at("limit").get<int>();
    c.feedback_template = tokens_from_json(jc.at("template"), vocab);
    task.constraints.push_back(std::move(c));
  }
  return task;
}

void write_suite(std::ostream& out, const std::vector<Task>& tasks, const Vocab& vocab) {
  for (const auto& t : tasks) out << task_to_line(t, vocab) << '\n';
}

std::vector<Task> read_suite(std::istream& in, const Vocab& vocab) {
  std::vector<Task> tasks;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      tasks.push_back(task_from_line(line, vocab));
    } catch (const std::exception& e) {
      throw std::runtime_error("task suite line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return tasks;
}

void save_suite(const std::filesystem::path& path, const std::vector<Task>& tasks,
                const Vocab& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_suite(out, tasks, vocab);
}

std::vector<Task> load_suite(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_suite(in, vocab);
}

}  // namespace fbos::envs
