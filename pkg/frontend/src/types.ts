/** Payload shapes of the server API the console talks to. */

export interface StoredFile {
  rel_path: string;
  size_bytes: number;
  checksum: string;
  kind: string;
}

export interface FileListing {
  files: StoredFile[];
  used_bytes: number;
  quota_bytes: number;
}

export interface CatalogPair {
  architecture: string;
  backbone: string;
}

export interface LrSchedule {
  initial_rate: number;
  decay_points: [number, number][];
}

export interface HyperParams {
  num_steps: number;
  num_classes: number;
  batch_size: number;
  checkpoint_every: number;
  lr: LrSchedule;
  augmentation?: AugmentPlan | null;
}

export interface AugmentPlan {
  enabled_ops: string[];
  fraction: number;
  seed: number;
}

export interface JobConfigBody {
  model: { architecture: string; backbone: string };
  hp: HyperParams;
  labelmap_path: string;
  train_record_path: string;
  eval_record_path: string;
  extras?: Record<string, string>;
  seed?: number;
}

export interface Job {
  job_id: string;
  state: "created" | "queued" | "running" | "succeeded" | "failed" | "cancelled";
  seed: number;
  current_step: number;
  num_steps: number;
  loss_history: [number, number][];
  checkpoints: [number, string][];
  error_message: string | null;
}

export interface PreprocessResult {
  labelmap_path: string;
  train_record_path: string;
  eval_record_path: string;
  classes: string[];
  train_count: number;
  eval_count: number;
  augmented_count: number;
}

export type TrainerEvent =
  | { type: "progress"; step: number; loss: number }
  | { type: "checkpoint"; step: number; path: string }
  | { type: "log"; level: "info" | "warn" | "error"; message: string }
  | { type: "completed"; final_step: number }
  | { type: "error"; message: string };

export interface StreamMessage {
  seq: number;
  event: TrainerEvent;
}

export interface Detection {
  image_id: string;
  box: [number, number, number, number];
  class_id: number;
  score: number;
}

export interface ApiErrorBody {
  status: number;
  code: string;
  message: string;
  details?: string[];
}
