"""Command-line client mirroring the HTTP API, plus the server launcher.

Exit codes: 0 success, 1 API error (machine-readable code printed),
2 usage error, 3 server unreachable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

EXIT_API_ERROR = 1
EXIT_NETWORK = 3

DEFAULT_SERVER = "http://127.0.0.1:8420"
DEFAULT_TOKEN_FILE = "~/.detlab/token"


class Session:
    def __init__(self, server: str, token_file: str):
        self.server = server.rstrip("/")
        self.token_path = Path(token_file).expanduser()
        self.client = httpx.Client(base_url=self.server, timeout=60.0)

    def headers(self) -> dict[str, str]:
        if not self.token_path.exists():
            return {}
        return {"Authorization": f"Bearer {self.token_path.read_text().strip()}"}

    def save_token(self, token: str) -> None:
        self.token_path.parent.mkdir(parents=True, exist_ok=True)
        self.token_path.write_text(token)

    def request(self, method: str, path: str, **kwargs) -> httpx.Response:
        try:
            response = self.client.request(
                method, path, headers=self.headers(), **kwargs
            )
        except httpx.TransportError as exc:
            click.echo(f"network error: cannot reach {self.server}: {exc}", err=True)
            sys.exit(EXIT_NETWORK)
        if response.status_code >= 400:
            try:
                body = response.json()
                code, message = body.get("code", "error"), body.get("message", "")
                details = body.get("details") or []
            except ValueError:
                code, message, details = "error", response.text, []
            click.echo(f"error ({code}): {message}", err=True)
            for detail in details:
                click.echo(f"  - {detail}", err=True)
            sys.exit(EXIT_API_ERROR)
        return response


pass_session = click.make_pass_decorator(Session)


@click.group()
@click.option("--server", envvar="DETLAB_SERVER", default=DEFAULT_SERVER,
              show_default=True, help="Server base URL.")
@click.option("--token-file", envvar="DETLAB_TOKEN_FILE",
              default=DEFAULT_TOKEN_FILE, show_default=True,
              help="Where the login token is cached.")
@click.pass_context
def main(ctx, server, token_file):
    """Client for the detlab training orchestration server."""
    ctx.obj = Session(server, token_file)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON service config file.")
def serve(config_path):
    """Run the API server (foreground)."""
    import uvicorn

    from .api import create_app
    from .service import Service, ServiceConfig

    config = ServiceConfig.load(config_path)
    app = create_app(Service(config))
    uvicorn.run(app, host=config.listen_host, port=config.listen_port,
                log_level="info")


@main.command()
@click.argument("display_name")
@click.option("--password", prompt=True, hide_input=True)
@pass_session
def signup(session, display_name, password):
    """Create an account (and its empty workspace)."""
    body = session.request(
        "POST",
        "/api/accounts",
        json={"display_name": display_name, "password": password},
    ).json()
    click.echo(f"account created: {body['display_name']}")


@main.command()
@click.argument("display_name")
@click.option("--password", prompt=True, hide_input=True)
@pass_session
def login(session, display_name, password):
    """Authenticate and cache the session token."""
    body = session.request(
        "POST",
        "/api/sessions",
        json={"display_name": display_name, "password": password},
    ).json()
    session.save_token(body["token"])
    click.echo("login ok")


@main.command()
@click.argument("local", type=click.Path(exists=True))
@click.argument("remote")
@pass_session
def upload(session, local, remote):
    """Upload LOCAL file to workspace path REMOTE."""
    content = Path(local).read_bytes()
    body = session.request("PUT", f"/api/files/{remote}", content=content).json()
    click.echo(f"{body['rel_path']}  {body['size_bytes']} bytes  {body['kind']}")


@main.command()
@click.argument("remote")
@click.argument("local", type=click.Path(), required=False)
@pass_session
def download(session, remote, local):
    """Download workspace file REMOTE (to LOCAL or stdout)."""
    response = session.request("GET", f"/api/files/{remote}")
    if local:
        Path(local).write_bytes(response.content)
        click.echo(f"wrote {local} ({len(response.content)} bytes)")
    else:
        sys.stdout.buffer.write(response.content)


@main.command()
@click.argument("prefix", required=False)
@pass_session
def ls(session, prefix):
    """List workspace files (optionally under PREFIX)."""
    params = {"prefix": prefix} if prefix else {}
    body = session.request("GET", "/api/files", params=params).json()
    for entry in body["files"]:
        click.echo(f"{entry['size_bytes']:>10}  {entry['kind']:<10} {entry['rel_path']}")
    click.echo(f"used {body['used_bytes']} / {body['quota_bytes']} bytes")


@main.command()
@click.argument("remote")
@pass_session
def rm(session, remote):
    """Delete a workspace file."""
    session.request("DELETE", f"/api/files/{remote}")
    click.echo(f"deleted {remote}")


@main.command()
@click.option("--format", "annotation_format", type=click.Choice(["voc_xml", "csv"]),
              required=True)
@click.option("--annotations-prefix", default=None)
@click.option("--images-prefix", default="")
@click.option("--ratio", default=0.8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--augment-ops", default="",
              help="Comma-separated: flip_h,rotate90,brightness,contrast,saturation")
@click.option("--augment-fraction", default=0.5, show_default=True)
@click.option("--augment-seed", default=0, show_default=True)
@click.option("--labelmap-out", default="out/labelmap.txt", show_default=True)
@click.option("--train-out", default="out/train.record", show_default=True)
@click.option("--eval-out", default="out/eval.record", show_default=True)
@pass_session
def preprocess(session, annotation_format, annotations_prefix, images_prefix,
               ratio, seed, augment_ops, augment_fraction, augment_seed,
               labelmap_out, train_out, eval_out):
    """Parse annotations, split, augment, and write record files."""
    body = {
        "annotation_format": annotation_format,
        "annotations_prefix": annotations_prefix,
        "images_prefix": images_prefix,
        "split_ratio": ratio,
        "split_seed": seed,
        "labelmap_path": labelmap_out,
        "train_record_path": train_out,
        "eval_record_path": eval_out,
    }
    ops = [op for op in augment_ops.split(",") if op]
    if ops:
        body["augment"] = {
            "enabled_ops": ops,
            "fraction": augment_fraction,
            "seed": augment_seed,
        }
    result = session.request("POST", "/api/preprocess", json=body).json()
    click.echo(
        f"classes: {', '.join(result['classes'])}\n"
        f"train records: {result['train_count']} "
        f"(augmented {result['augmented_count']})\n"
        f"eval records: {result['eval_count']}\n"
        f"labelmap: {result['labelmap_path']}"
    )


@main.command()
@pass_session
def catalog(session):
    """List available architecture/backbone pairs."""
    body = session.request("GET", "/api/catalog").json()
    for pair in body["pairs"]:
        click.echo(f"{pair['architecture']:<14} {pair['backbone']}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True,
              help="Local JSON file with the job body (model, hp, paths).")
@click.option("--seed", default=None, type=int)
@click.option("--no-start", is_flag=True, help="Create the job without starting it.")
@pass_session
def train(session, config_path, seed, no_start):
    """Create a training job (and start it unless --no-start)."""
    body = json.loads(Path(config_path).read_text("utf-8"))
    if seed is not None:
        body["seed"] = seed
    job = session.request("POST", "/api/jobs", json=body).json()
    click.echo(f"job {job['job_id']} created")
    if not no_start:
        started = session.request("POST", f"/api/jobs/{job['job_id']}/start").json()
        click.echo(
            f"state: {started['job']['state']}"
            f" (queue position {started['queue_position']})"
        )


@main.command()
@click.argument("job_id", required=False)
@pass_session
def status(session, job_id):
    """Show one job's status, or the scheduler snapshot."""
    if job_id:
        job = session.request("GET", f"/api/jobs/{job_id}").json()
        click.echo(
            f"job {job['job_id']}: {job['state']}"
            f" step {job['current_step']}/{job['num_steps']}"
            f" checkpoints {len(job['checkpoints'])}"
        )
        if job.get("error_message"):
            click.echo(f"error: {job['error_message']}")
    else:
        snapshot = session.request("GET", "/api/scheduler/status").json()
        click.echo(
            f"gpus: {snapshot['capacity']} total, {len(snapshot['free_gpus'])} free"
        )
        for lease in snapshot["active"]:
            click.echo(f"running: {lease['job_id']} on {lease['gpu_id']}")
        for entry in snapshot["queued"]:
            click.echo(f"queued[{entry['position']}]: {entry['job_id']}")


@main.command()
@click.argument("job_id")
@click.option("--from-seq", default=0, show_default=True)
@pass_session
def watch(session, job_id, from_seq):
    """Stream a job's events (replays history, then follows live)."""
    try:
        with session.client.stream(
            "GET",
            f"/api/jobs/{job_id}/events",
            params={"from_seq": from_seq},
            headers=session.headers(),
        ) as response:
            if response.status_code >= 400:
                response.read()
                click.echo(f"error: {response.status_code}", err=True)
                sys.exit(EXIT_API_ERROR)
            for line in response.iter_lines():
                if not line.startswith("data: "):
                    continue
                event = json.loads(line[len("data: "):])
                payload = event["event"]
                kind = payload["type"]
                if kind == "progress":
                    click.echo(
                        f"[{event['seq']:>4}] step {payload['step']:>7}"
                        f"  loss {payload['loss']:.4f}"
                    )
                elif kind == "checkpoint":
                    click.echo(
                        f"[{event['seq']:>4}] checkpoint at step {payload['step']}"
                    )
                elif kind == "completed":
                    click.echo(f"[{event['seq']:>4}] completed"
                               f" at step {payload['final_step']}")
                elif kind == "error":
                    click.echo(f"[{event['seq']:>4}] error: {payload['message']}")
                else:
                    click.echo(f"[{event['seq']:>4}] {payload['level']}:"
                               f" {payload['message']}")
    except httpx.TransportError as exc:
        click.echo(f"network error: {exc}", err=True)
        sys.exit(EXIT_NETWORK)


@main.command()
@click.argument("job_id")
@pass_session
def cancel(session, job_id):
    """Cancel a queued or running job."""
    job = session.request("POST", f"/api/jobs/{job_id}/cancel").json()
    click.echo(f"job {job['job_id']}: {job['state']}")


@main.command()
@click.option("--detections", "detections_path", required=True,
              help="Workspace path of the detections JSON file.")
@click.option("--format", "annotation_format", type=click.Choice(["voc_xml", "csv"]),
              required=True)
@click.option("--annotations-prefix", required=True)
@click.option("--labelmap", "labelmap_path", default="out/labelmap.txt",
              show_default=True)
@click.option("--protocol", default="coco_50_95", show_default=True,
              type=click.Choice(["voc50_11pt", "voc50_allpt", "coco_50_95"]))
@pass_session
def evaluate(session, detections_path, annotation_format, annotations_prefix,
             labelmap_path, protocol):
    """Score a detections file against annotation ground truth."""
    body = session.request(
        "POST",
        "/api/evaluations",
        json={
            "detections_path": detections_path,
            "annotation_format": annotation_format,
            "annotations_prefix": annotations_prefix,
            "labelmap_path": labelmap_path,
            "protocol": protocol,
        },
    ).json()
    click.echo(body["table"], nl=False)


@main.command()
@click.argument("job_id")
@click.argument("checkpoint_step", type=int)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Also download the bundle archive to this local path.")
@pass_session
def export(session, job_id, checkpoint_step, out_path):
    """Export a checkpoint as a verified bundle."""
    body = session.request(
        "POST",
        f"/api/jobs/{job_id}/export",
        json={"checkpoint_step": checkpoint_step},
    ).json()
    click.echo(f"bundle: {body['bundle_dir']}")
    if out_path:
        archive = session.request(
            "GET", f"/api/exports/{body['export_id']}/archive"
        )
        Path(out_path).write_bytes(archive.content)
        click.echo(f"wrote {out_path} ({len(archive.content)} bytes)")


@main.command()
@click.option("--image", "image_path", required=True,
              help="Workspace path of the input image.")
@click.option("--detections", "detections_path", required=True,
              help="Workspace path of the detections JSON file.")
@click.option("--labelmap", "labelmap_path", default="out/labelmap.txt",
              show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@pass_session
def render(session, image_path, detections_path, labelmap_path, threshold, out_path):
    """Render detection boxes onto an image; writes a local PNG."""
    response = session.request(
        "POST",
        "/api/render",
        json={
            "image_path": image_path,
            "detections_path": detections_path,
            "labelmap_path": labelmap_path,
            "score_threshold": threshold,
        },
    )
    Path(out_path).write_bytes(response.content)
    click.echo(f"wrote {out_path} ({len(response.content)} bytes)")


if __name__ == "__main__":
    main()
