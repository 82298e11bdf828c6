/** Console entry point: wires the six regions together.
 *
 * Regions: (a) toolbar, (b) file browser, (c) workflow steps, (d) activity
 * console, (e) preview (loss chart / detection overlay), (f) status bar.
 * Everything goes through the public API client; the console holds no
 * privileged channel.
 */

import { ApiClient, ApiError } from "./api.js";
import { ChartState, drawLossChart } from "./chart.js";
import { drawOverlay } from "./overlay.js";
import { EventStreamClient } from "./stream.js";
import type { Detection, JobConfigBody } from "./types.js";
import { WIZARD_STEPS, WizardState, type WizardStep } from "./wizard.js";

const api = new ApiClient("");
const wizard = new WizardState();
let activeStream: EventStreamClient | null = null;
let chart = new ChartState();
let watchedJob: string | null = null;
let detections: Detection[] = [];
let classNames = new Map<number, string>();
let previewImage: HTMLImageElement | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function logLine(kind: string, message: string): void {
  const consoleBox = el<HTMLDivElement>("activity");
  const line = document.createElement("div");
  line.className = `log log-${kind}`;
  line.textContent = `${new Date().toLocaleTimeString()}  ${message}`;
  consoleBox.appendChild(line);
  consoleBox.scrollTop = consoleBox.scrollHeight;
}

function setStatus(text: string): void {
  el<HTMLSpanElement>("status-connection").textContent = text;
}

async function guard<T>(work: () => Promise<T>): Promise<T | undefined> {
  try {
    return await work();
  } catch (error) {
    if (error instanceof ApiError) {
      logLine("error", `${error.code}: ${error.message}`);
      for (const detail of error.details) {
        logLine("error", `  - ${detail}`);
      }
    } else {
      logLine("error", String(error));
    }
    return undefined;
  }
}

// ---- file browser (region b) ------------------------------------------

async function refreshFiles(): Promise<void> {
  const listing = await guard(() => api.listFiles());
  if (!listing) {
    return;
  }
  const box = el<HTMLTableSectionElement>("file-rows");
  box.innerHTML = "";
  for (const file of listing.files) {
    const row = document.createElement("tr");
    row.innerHTML =
      `<td>${file.rel_path}</td><td>${file.kind}</td>` +
      `<td class="num">${file.size_bytes}</td>`;
    row.addEventListener("click", () => previewFile(file.rel_path, file.kind));
    box.appendChild(row);
  }
  el<HTMLSpanElement>("status-usage").textContent =
    `${(listing.used_bytes / 1024).toFixed(1)} KiB / ` +
    `${(listing.quota_bytes / 1024 / 1024).toFixed(0)} MiB`;
}

async function previewFile(relPath: string, kind: string): Promise<void> {
  if (kind !== "image") {
    logLine("info", `selected ${relPath}`);
    return;
  }
  const blob = await guard(() => api.downloadFile(relPath));
  if (!blob) {
    return;
  }
  const image = new Image();
  image.onload = () => {
    previewImage = image;
    redrawPreview();
  };
  image.src = URL.createObjectURL(blob);
  logLine("info", `preview ${relPath}`);
}

// ---- preview (region e) -----------------------------------------------

function redrawPreview(): void {
  const canvas = el<HTMLCanvasElement>("preview-canvas");
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    return;
  }
  const mode = el<HTMLSelectElement>("preview-mode").value;
  if (mode === "chart") {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    drawLossChart(ctx, chart, canvas.width, canvas.height);
    return;
  }
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (previewImage) {
    canvas.width = previewImage.naturalWidth;
    canvas.height = previewImage.naturalHeight;
    ctx.drawImage(previewImage, 0, 0);
    const threshold = Number(el<HTMLInputElement>("threshold").value);
    el<HTMLSpanElement>("threshold-value").textContent = threshold.toFixed(2);
    drawOverlay(
      ctx, detections, classNames, canvas.width, canvas.height, threshold,
    );
  }
}

// ---- live training view ------------------------------------------------

function watchJob(jobId: string): void {
  activeStream?.close();
  chart = new ChartState();
  watchedJob = jobId;
  el<HTMLSpanElement>("watched-job").textContent = jobId;
  activeStream = new EventStreamClient("", api.token ?? "", jobId, 0);
  void activeStream
    .run(
      (message) => {
        chart.accept(message);
        if (message.event.type === "checkpoint") {
          logLine("info", `checkpoint at step ${message.event.step}`);
          void refreshFiles();
        } else if (message.event.type === "completed") {
          logLine("info", `job completed at step ${message.event.final_step}`);
        } else if (message.event.type === "error") {
          logLine("error", `job failed: ${message.event.message}`);
        }
        redrawPreview();
      },
      (state) => setStatus(`stream: ${state}`),
    )
    .catch((error) => logLine("error", `stream error: ${error}`));
}

// ---- workflow wizard (region c) ----------------------------------------

function renderWizard(): void {
  const box = el<HTMLOListElement>("wizard-steps");
  box.innerHTML = "";
  for (const step of WIZARD_STEPS) {
    const item = document.createElement("li");
    item.textContent = step.replace("_", " + ");
    item.className =
      step === wizard.currentStep
        ? "step-current"
        : wizard.canEnter(step)
          ? "step-open"
          : "step-locked";
    box.appendChild(item);
  }
}

function markStep(step: WizardStep, result: unknown): void {
  wizard.complete(step, result);
  renderWizard();
}

async function runPreprocess(): Promise<void> {
  const ops = [...el<HTMLSelectElement>("augment-ops").selectedOptions].map(
    (option) => option.value,
  );
  const body = {
    annotation_format: el<HTMLSelectElement>("annotation-format").value,
    annotations_prefix: el<HTMLInputElement>("annotations-prefix").value,
    images_prefix: el<HTMLInputElement>("images-prefix").value,
    split_ratio: Number(el<HTMLInputElement>("split-ratio").value),
    split_seed: Number(el<HTMLInputElement>("split-seed").value),
    augment: ops.length
      ? {
          enabled_ops: ops,
          fraction: Number(el<HTMLInputElement>("augment-fraction").value),
          seed: Number(el<HTMLInputElement>("split-seed").value),
        }
      : null,
  };
  const result = await guard(() => api.preprocess(body));
  if (!result) {
    return;
  }
  markStep("validate", result.classes);
  markStep("labelmap", result.labelmap_path);
  markStep("split_augment", result);
  logLine(
    "info",
    `preprocess: classes [${result.classes.join(", ")}], ` +
      `${result.train_count} train (${result.augmented_count} augmented), ` +
      `${result.eval_count} eval`,
  );
  classNames = new Map(result.classes.map((name, i) => [i + 1, name]));
  await refreshFiles();
}

function jobBodyFromForm(): JobConfigBody {
  const [architecture, backbone] =
    el<HTMLSelectElement>("model-pair").value.split("/");
  const decayStep = Number(el<HTMLInputElement>("lr-decay-step").value);
  const decayRate = Number(el<HTMLInputElement>("lr-decay-rate").value);
  return {
    model: { architecture, backbone },
    hp: {
      num_steps: Number(el<HTMLInputElement>("num-steps").value),
      num_classes: classNames.size || 2,
      batch_size: Number(el<HTMLInputElement>("batch-size").value),
      checkpoint_every: Number(el<HTMLInputElement>("checkpoint-every").value),
      lr: {
        initial_rate: Number(el<HTMLInputElement>("lr-initial").value),
        decay_points: decayStep > 0 ? [[decayStep, decayRate]] : [],
      },
    },
    labelmap_path: "out/labelmap.txt",
    train_record_path: "out/train.record",
    eval_record_path: "out/eval.record",
    seed: Number(el<HTMLInputElement>("split-seed").value),
  };
}

async function createAndStartJob(): Promise<void> {
  markStep("model", jobBodyFromForm());
  markStep("review", true);
  const job = await guard(() => api.createJob(jobBodyFromForm()));
  if (!job) {
    return;
  }
  logLine("info", `job ${job.job_id} created`);
  const started = await guard(() => api.startJob(job.job_id));
  if (!started) {
    return;
  }
  markStep("start", job.job_id);
  logLine("info", `job ${job.job_id}: ${started.job.state}`);
  el<HTMLSelectElement>("preview-mode").value = "chart";
  watchJob(job.job_id);
}

// ---- toolbar (region a) --------------------------------------------------

function bindToolbar(): void {
  el<HTMLInputElement>("upload-input").addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement;
    const prefix = el<HTMLInputElement>("upload-prefix").value;
    for (const file of input.files ?? []) {
      await guard(async () => {
        await api.uploadFile(`${prefix}${file.name}`, file);
        logLine("info", `uploaded ${prefix}${file.name}`);
      });
    }
    markStep("upload", true);
    await refreshFiles();
  });
  el<HTMLButtonElement>("btn-refresh").addEventListener("click", () => {
    void refreshFiles();
  });
  el<HTMLButtonElement>("btn-preprocess").addEventListener("click", () => {
    void runPreprocess();
  });
  el<HTMLButtonElement>("btn-train").addEventListener("click", () => {
    void createAndStartJob();
  });
  el<HTMLButtonElement>("btn-cancel").addEventListener("click", () => {
    if (watchedJob) {
      void guard(() => api.cancelJob(watchedJob as string)).then(() =>
        logLine("info", `cancel requested for ${watchedJob}`),
      );
    }
  });
  el<HTMLInputElement>("threshold").addEventListener("input", redrawPreview);
  el<HTMLSelectElement>("preview-mode").addEventListener("change", redrawPreview);
  el<HTMLInputElement>("detections-path").addEventListener("change", async (ev) => {
    const relPath = (ev.target as HTMLInputElement).value;
    const loaded = await guard(() => api.loadDetections(relPath));
    if (loaded) {
      detections = loaded;
      logLine("info", `loaded ${detections.length} detections from ${relPath}`);
      redrawPreview();
    }
  });
}

// ---- login ---------------------------------------------------------------

function bindLogin(): void {
  el<HTMLFormElement>("login-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const name = el<HTMLInputElement>("login-name").value;
    const password = el<HTMLInputElement>("login-password").value;
    const create = el<HTMLInputElement>("login-create").checked;
    const ok = await guard(async () => {
      if (create) {
        await api.signup(name, password);
      }
      await api.login(name, password);
      return true;
    });
    if (!ok) {
      return;
    }
    el<HTMLDivElement>("login-view").hidden = true;
    el<HTMLDivElement>("console-view").hidden = false;
    el<HTMLSpanElement>("status-workspace").textContent = name;
    setStatus("connected");
    const pairs = await guard(() => api.catalog());
    if (pairs) {
      const select = el<HTMLSelectElement>("model-pair");
      select.innerHTML = "";
      for (const pair of pairs.pairs) {
        const option = document.createElement("option");
        option.value = `${pair.architecture}/${pair.backbone}`;
        option.textContent = `${pair.architecture} / ${pair.backbone}`;
        select.appendChild(option);
      }
      select.value = "ssd/mobilenet_v2";
    }
    renderWizard();
    await refreshFiles();
  });
}

bindLogin();
bindToolbar();
renderWizard();
setStatus("not connected");
