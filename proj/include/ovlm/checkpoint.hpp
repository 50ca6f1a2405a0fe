#pragma once

#include <string>
#include <vector>

#include "ovlm/model.hpp"

namespace ovlm {

// Binary checkpoint, format v1:
//   magic "OVLM" | version u32 LE | config_len u32 LE | config JSON (UTF-8)
//   | tensor_count u32 LE | per tensor:
//       name_len u16 LE | name | ndim u8 | dims u32 LE x ndim
//       | dtype u8 (0 = f32 LE) | payload (4 * prod(dims) bytes)
// Tensors are written in expected_tensors() order; load validates the full
// tensor set (names + shapes) against the embedded config before returning.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const Weights& w);

struct LoadedCheckpoint {
    ModelConfig config;
    Weights weights;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// Dataset records.
struct CaptionRecord {
    std::string image;
    std::string prompt;
    std::string response;
};
struct DpoRecord {
    std::string image;
    std::string prompt;
    std::string original;
    std::string edited;
};

enum class DatasetKind { Caption, Sft, Dpo };

template <typename Rec>
struct DatasetResult {
    std::vector<Rec> records;
    int skipped = 0;
    std::vector<std::string> warnings;  // line-numbered reasons
};

// Line-by-line JSONL parse; malformed lines are skipped with a warning.
// Throws InputError when no valid record remains.
DatasetResult<CaptionRecord> read_caption_dataset(const std::string& path);
DatasetResult<DpoRecord> read_dpo_dataset(const std::string& path);

}  // namespace ovlm
