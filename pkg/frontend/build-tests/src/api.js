/** Thin typed client over the server's JSON API. */
export class ApiError extends Error {
    status;
    code;
    details;
    constructor(status, code, message, details = []) {
        super(message);
        this.status = status;
        this.code = code;
        this.details = details;
    }
}
async function raiseForStatus(response) {
    if (response.ok) {
        return;
    }
    let body = null;
    try {
        body = (await response.json());
    }
    catch {
        // non-JSON error body
    }
    throw new ApiError(response.status, body?.code ?? "error", body?.message ?? response.statusText, body?.details ?? []);
}
export class ApiClient {
    baseUrl;
    token = null;
    constructor(baseUrl = "") {
        this.baseUrl = baseUrl;
    }
    headers(extra = {}) {
        const headers = { ...extra };
        if (this.token) {
            headers["Authorization"] = `Bearer ${this.token}`;
        }
        return headers;
    }
    async json(method, path, body) {
        const response = await fetch(this.baseUrl + path, {
            method,
            headers: this.headers(body === undefined ? {} : { "Content-Type": "application/json" }),
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        await raiseForStatus(response);
        return (await response.json());
    }
    async signup(displayName, password) {
        await this.json("POST", "/api/accounts", {
            display_name: displayName,
            password,
        });
    }
    async login(displayName, password) {
        const body = await this.json("POST", "/api/sessions", {
            display_name: displayName,
            password,
        });
        this.token = body.token;
    }
    listFiles(prefix) {
        const query = prefix ? `?prefix=${encodeURIComponent(prefix)}` : "";
        return this.json("GET", `/api/files${query}`);
    }
    async uploadFile(relPath, content) {
        const response = await fetch(`${this.baseUrl}/api/files/${relPath}`, {
            method: "PUT",
            headers: this.headers(),
            body: content,
        });
        await raiseForStatus(response);
        return (await response.json());
    }
    async downloadFile(relPath) {
        const response = await fetch(`${this.baseUrl}/api/files/${relPath}`, {
            headers: this.headers(),
        });
        await raiseForStatus(response);
        return response.blob();
    }
    async deleteFile(relPath) {
        const response = await fetch(`${this.baseUrl}/api/files/${relPath}`, {
            method: "DELETE",
            headers: this.headers(),
        });
        await raiseForStatus(response);
    }
    catalog() {
        return this.json("GET", "/api/catalog");
    }
    preprocess(body) {
        return this.json("POST", "/api/preprocess", body);
    }
    createJob(body) {
        return this.json("POST", "/api/jobs", body);
    }
    startJob(jobId) {
        return this.json("POST", `/api/jobs/${jobId}/start`);
    }
    cancelJob(jobId) {
        return this.json("POST", `/api/jobs/${jobId}/cancel`);
    }
    getJob(jobId) {
        return this.json("GET", `/api/jobs/${jobId}`);
    }
    listJobs() {
        return this.json("GET", "/api/jobs");
    }
    async loadDetections(relPath) {
        const blob = await this.downloadFile(relPath);
        return JSON.parse(await blob.text());
    }
    schedulerStatus() {
        return this.json("GET", "/api/scheduler/status");
    }
}
