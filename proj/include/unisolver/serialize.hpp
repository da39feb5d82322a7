#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "unisolver/dataset.hpp"
#include "unisolver/embedding.hpp"
#include "unisolver/model.hpp"
#include "unisolver/training.hpp"

namespace unisolver {

// Floating-point width of field payloads inside dataset containers. Both
// widths round-trip byte-identically; f32 halves the file at reduced
// precision.
enum class FieldDType : std::uint8_t { F32 = 0, F64 = 1 };

// --- dataset container ------------------------------------------------------
//
// Single little-endian binary file, magic "UPDE", format version 1:
// header (family, grid, retry count, declared sample count, field schema),
// then one self-contained record per sample (equation text, coefficient map,
// boundary condition, optional per-point fields, inputs, outputs, split tag).
// Loading checks the version, replays every record against the header schema,
// validates each sample against the grid, and rejects trailing bytes, so the
// declared count always equals the record count.

void save_dataset(std::ostream& out, const Dataset& dataset,
                  FieldDType dtype = FieldDType::F64);
Dataset load_dataset(std::istream& in);
void save_dataset_file(const std::string& path, const Dataset& dataset,
                       FieldDType dtype = FieldDType::F64);
Dataset load_dataset_file(const std::string& path);

// --- checkpoint container ---------------------------------------------------
//
// Single little-endian binary file, magic "UCKP", format version 1: the
// complete architecture description (network and condition-embedder configs),
// the training configuration, the epoch the parameters came from, an opaque
// random-generator state string, and every named parameter tensor as 64-bit
// floats in the canonical name order. The stored configs alone rebuild the
// architecture; the tensors then restore it value-exactly.

struct Checkpoint {
    ModelConfig model;
    ConditionEmbedderConfig embedder;
    TrainConfig train;
    std::uint64_t epoch = 0;
    std::string rng_state;
    ParameterSnapshot params;
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint_file(const std::string& path);

// Captures the live parameters of a network/embedder pair.
Checkpoint make_checkpoint(const UnisolverModel& model,
                           const ConditionEmbedder& embedder,
                           const TrainConfig& train, std::uint64_t epoch,
                           const std::string& rng_state);

// Rebuilds the architecture a checkpoint describes and loads its parameters.
struct RestoredRun {
    UnisolverModel model;
    ConditionEmbedder embedder;
};
RestoredRun restore_checkpoint(const Checkpoint& ckpt);

// Field-by-field comparison of a stored architecture against a declared one;
// throws naming the first differing field. The stored config is authoritative
// for anything downstream of a checkpoint.
void require_matching_architecture(const ModelConfig& stored,
                                   const ModelConfig& declared);

}  // namespace unisolver
