#include <mutex>

#include "zelda/error.hpp"
#include "zelda/service.hpp"

namespace zelda {

DatasetSummary RegisteredDataset::summary() const {
    return {dataset.name(), dataset.size(), dataset.dim(), dataset.header().model};
}

DatasetSummary Registry::register_dataset(const DatasetSource& source) {
    if (source.name.empty()) throw Error(ErrorCode::kInvalidArgument, "dataset name is empty");
    {
        std::shared_lock lock(mutex_);
        if (datasets_.count(source.name)) {
            throw Error(ErrorCode::kDuplicateName, "dataset '" + source.name + "' already registered");
        }
    }
    // Load outside the lock; the writer lock only covers publication.
    std::optional<PromptCache> prompts;
    if (source.prompts_archive_path) {
        if (!source.prompts_texts_path) {
            throw Error(ErrorCode::kInvalidArgument, "prompt cache archive given without its texts file");
        }
        prompts = PromptCache::load(*source.prompts_archive_path, *source.prompts_texts_path);
    }
    std::optional<std::vector<std::string>> labels;
    if (source.labels_path) labels = load_label_set(*source.labels_path);
    auto entry = std::make_shared<const RegisteredDataset>(
        RegisteredDataset{load_dataset(source.name, source.archive_path, source.frames_path), std::move(prompts),
                          source.frames_path.parent_path(), std::move(labels)});
    if (entry->prompts && entry->prompts->size() > 0 && entry->dataset.size() > 0) {
        const auto* first = entry->prompts->find(entry->prompts->texts().front());
        if (first->dim() != entry->dataset.dim()) {
            throw Error(ErrorCode::kDimensionMismatch, "prompt cache dim differs from dataset dim");
        }
    }

    std::unique_lock lock(mutex_);
    auto [it, inserted] = datasets_.emplace(source.name, entry);
    if (!inserted) throw Error(ErrorCode::kDuplicateName, "dataset '" + source.name + "' already registered");
    return it->second->summary();
}

std::shared_ptr<const RegisteredDataset> Registry::find(const std::string& name) const {
    std::shared_lock lock(mutex_);
    auto it = datasets_.find(name);
    if (it == datasets_.end()) throw Error(ErrorCode::kUnknownDataset, "no dataset named '" + name + "'");
    return it->second;
}

std::vector<DatasetSummary> Registry::list() const {
    std::shared_lock lock(mutex_);
    std::vector<DatasetSummary> out;
    for (const auto& [name, entry] : datasets_) out.push_back(entry->summary());
    return out;
}

DatasetSource dataset_source_from_dir(const std::string& name, const std::filesystem::path& dir) {
    DatasetSource source;
    source.name = name;
    source.archive_path = dir / "frames.zea";
    source.frames_path = dir / "frames.jsonl";
    if (std::filesystem::exists(dir / "prompts.zea")) {
        source.prompts_archive_path = dir / "prompts.zea";
        source.prompts_texts_path = dir / "prompts.jsonl";
    }
    if (std::filesystem::exists(dir / "labels.txt")) source.labels_path = dir / "labels.txt";
    return source;
}

}  // namespace zelda
