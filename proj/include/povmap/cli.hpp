#pragma once

#include "povmap/groundtruth.hpp"
#include "povmap/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace povmap::cli {

/// Resolved settings shared by the training-flavoured subcommands. Values
/// come from flags first, then the config file, then these defaults.
struct RunConfig {
    std::filesystem::path manifest;  // path to the bundle's manifest file
    pipeline::RecencyMode recency = pipeline::RecencyMode::on_combined;
    groundtruth::RelocationMode relocation = groundtruth::RelocationMode::none;
    pipeline::WeightScheme weights = pipeline::WeightScheme::ens;
    std::string profile = "ci"; // search budget: "ci" or "full"
    std::uint64_t seed = 0;
    std::filesystem::path out = "povmap_out";

    pipeline::SearchSpec search() const; // Error("UsageError") on a bad profile
};

/// Entry point for the povmap command line tool. Parses argv, runs the
/// selected subcommand, and returns the process exit code: 0 on success, 2
/// for usage problems, 1 for runtime failures.
int run_cli(int argc, char **argv);

} // namespace povmap::cli
