#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "petnet/config.hpp"

namespace petnet::commands {

// Exit codes shared by the CLI and the command implementations.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitGradcheck = 5;

void cmd_generate(const config::RunConfig& cfg, std::ostream& out);
void cmd_train(const config::RunConfig& cfg, std::ostream& out);
void cmd_evaluate(const config::RunConfig& cfg, const std::filesystem::path& model_path,
                  const std::string& split, std::ostream& out);
void cmd_predict(const std::filesystem::path& model_path, const std::filesystem::path& input_pgm,
                 const std::filesystem::path& output_prefix, std::ostream& out);
int cmd_gradcheck(std::ostream& out);

// Maps a thrown petnet error onto the documented exit codes.
int exit_code_for(const std::exception& e);

}  // namespace petnet::commands
