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
import { WIZARD_STEPS, WizardState } from "./wizard.js";
const api = new ApiClient("");
const wizard = new WizardState();
let activeStream = null;
let chart = new ChartState();
let watchedJob = null;
let detections = [];
let classNames = new Map();
let previewImage = null;
function el(id) {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function logLine(kind, message) {
    const consoleBox = el("activity");
    const line = document.createElement("div");
    line.className = `log log-${kind}`;
    line.textContent = `${new Date().toLocaleTimeString()}  ${message}`;
    consoleBox.appendChild(line);
    consoleBox.scrollTop = consoleBox.scrollHeight;
}
function setStatus(text) {
    el("status-connection").textContent = text;
}
async function guard(work) {
    try {
        return await work();
    }
    catch (error) {
        if (error instanceof ApiError) {
            logLine("error", `${error.code}: ${error.message}`);
            for (const detail of error.details) {
                logLine("error", `  - ${detail}`);
            }
        }
        else {
            logLine("error", String(error));
        }
        return undefined;
    }
}
// ---- file browser (region b) ------------------------------------------
async function refreshFiles() {
    const listing = await guard(() => api.listFiles());
    if (!listing) {
        return;
    }
    const box = el("file-rows");
    box.innerHTML = "";
    for (const file of listing.files) {
        const row = document.createElement("tr");
        row.innerHTML =
            `<td>${file.rel_path}</td><td>${file.kind}</td>` +
                `<td class="num">${file.size_bytes}</td>`;
        row.addEventListener("click", () => previewFile(file.rel_path, file.kind));
        box.appendChild(row);
    }
    el("status-usage").textContent =
        `${(listing.used_bytes / 1024).toFixed(1)} KiB / ` +
            `${(listing.quota_bytes / 1024 / 1024).toFixed(0)} MiB`;
}
async function previewFile(relPath, kind) {
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
function redrawPreview() {
    const canvas = el("preview-canvas");
    const ctx = canvas.getContext("2d");
    if (!ctx) {
        return;
    }
    const mode = el("preview-mode").value;
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
        const threshold = Number(el("threshold").value);
        el("threshold-value").textContent = threshold.toFixed(2);
        drawOverlay(ctx, detections, classNames, canvas.width, canvas.height, threshold);
    }
}
// ---- live training view ------------------------------------------------
function watchJob(jobId) {
    activeStream?.close();
    chart = new ChartState();
    watchedJob = jobId;
    el("watched-job").textContent = jobId;
    activeStream = new EventStreamClient("", api.token ?? "", jobId, 0);
    void activeStream
        .run((message) => {
        chart.accept(message);
        if (message.event.type === "checkpoint") {
            logLine("info", `checkpoint at step ${message.event.step}`);
            void refreshFiles();
        }
        else if (message.event.type === "completed") {
            logLine("info", `job completed at step ${message.event.final_step}`);
        }
        else if (message.event.type === "error") {
            logLine("error", `job failed: ${message.event.message}`);
        }
        redrawPreview();
    }, (state) => setStatus(`stream: ${state}`))
        .catch((error) => logLine("error", `stream error: ${error}`));
}
// ---- workflow wizard (region c) ----------------------------------------
function renderWizard() {
    const box = el("wizard-steps");
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
function markStep(step, result) {
    wizard.complete(step, result);
    renderWizard();
}
async function runPreprocess() {
    const ops = [...el("augment-ops").selectedOptions].map((option) => option.value);
    const body = {
        annotation_format: el("annotation-format").value,
        annotations_prefix: el("annotations-prefix").value,
        images_prefix: el("images-prefix").value,
        split_ratio: Number(el("split-ratio").value),
        split_seed: Number(el("split-seed").value),
        augment: ops.length
            ? {
                enabled_ops: ops,
                fraction: Number(el("augment-fraction").value),
                seed: Number(el("split-seed").value),
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
    logLine("info", `preprocess: classes [${result.classes.join(", ")}], ` +
        `${result.train_count} train (${result.augmented_count} augmented), ` +
        `${result.eval_count} eval`);
    classNames = new Map(result.classes.map((name, i) => [i + 1, name]));
    await refreshFiles();
}
function jobBodyFromForm() {
    const [architecture, backbone] = el("model-pair").value.split("/");
    const decayStep = Number(el("lr-decay-step").value);
    const decayRate = Number(el("lr-decay-rate").value);
    return {
        model: { architecture, backbone },
        hp: {
            num_steps: Number(el("num-steps").value),
            num_classes: classNames.size || 2,
            batch_size: Number(el("batch-size").value),
            checkpoint_every: Number(el("checkpoint-every").value),
            lr: {
                initial_rate: Number(el("lr-initial").value),
                decay_points: decayStep > 0 ? [[decayStep, decayRate]] : [],
            },
        },
        labelmap_path: "out/labelmap.txt",
        train_record_path: "out/train.record",
        eval_record_path: "out/eval.record",
        seed: Number(el("split-seed").value),
    };
}
async function createAndStartJob() {
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
    el("preview-mode").value = "chart";
    watchJob(job.job_id);
}
// ---- toolbar (region a) --------------------------------------------------
function bindToolbar() {
    el("upload-input").addEventListener("change", async (ev) => {
        const input = ev.target;
        const prefix = el("upload-prefix").value;
        for (const file of input.files ?? []) {
            await guard(async () => {
                await api.uploadFile(`${prefix}${file.name}`, file);
                logLine("info", `uploaded ${prefix}${file.name}`);
            });
        }
        markStep("upload", true);
        await refreshFiles();
    });
    el("btn-refresh").addEventListener("click", () => {
        void refreshFiles();
    });
    el("btn-preprocess").addEventListener("click", () => {
        void runPreprocess();
    });
    el("btn-train").addEventListener("click", () => {
        void createAndStartJob();
    });
    el("btn-cancel").addEventListener("click", () => {
        if (watchedJob) {
            void guard(() => api.cancelJob(watchedJob)).then(() => logLine("info", `cancel requested for ${watchedJob}`));
        }
    });
    el("threshold").addEventListener("input", redrawPreview);
    el("preview-mode").addEventListener("change", redrawPreview);
    el("detections-path").addEventListener("change", async (ev) => {
        const relPath = ev.target.value;
        const loaded = await guard(() => api.loadDetections(relPath));
        if (loaded) {
            detections = loaded;
            logLine("info", `loaded ${detections.length} detections from ${relPath}`);
            redrawPreview();
        }
    });
}
// ---- login ---------------------------------------------------------------
function bindLogin() {
    el("login-form").addEventListener("submit", async (ev) => {
        ev.preventDefault();
        const name = el("login-name").value;
        const password = el("login-password").value;
        const create = el("login-create").checked;
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
        el("login-view").hidden = true;
        el("console-view").hidden = false;
        el("status-workspace").textContent = name;
        setStatus("connected");
        const pairs = await guard(() => api.catalog());
        if (pairs) {
            const select = el("model-pair");
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
