#ifndef FBOS_TASK_IO_HPP_
#define FBOS_TASK_IO_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fbos/envs.hpp"

namespace fbos::envs {

// One task per line, as a JSON object with tokens spelled by name:
//   {"id":..,"env":..,"difficulty":..,"prompt":[..],
//    "constraints":[{"id":..,"class":..,"kind":..,"position":..,"value":..,
//                    "limit":..,"template":[.., "<detail>", ..]}]}
std::string task_to_line(const Task& task, const Vocab& vocab);
Task task_from_line(const std::string& line, const Vocab& vocab);

void write_suite(std::ostream& out, const std::vector<Task>& tasks, const Vocab& vocab);
std::vector<Task> read_suite(std::istream& in, const Vocab& vocab);

void save_suite(const std::filesystem::path& path, const std::vector<Task>& tasks,
                const Vocab& vocab);
std::vector<Task> load_suite(const std::filesystem::path& path, const Vocab& vocab);

}  // namespace fbos::envs

#endif  // FBOS_TASK_IO_HPP_
