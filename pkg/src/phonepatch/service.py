"""HTTP front end for the correction pipeline.

A small FastAPI app: clients list prompts, upload a recording of one, poll
the resulting job, and fetch a blind A/B pair of the two outputs (resynthesis
of the recording as-is vs the corrected version).  Jobs live on the
filesystem, one directory each, and run on a bounded worker pool.

Live recordings arrive without phoneme alignments.  Prompts therefore carry
expected per-phoneme duration fractions which are scaled to the recording
length (uniform-proportional alignment); an optional multipart `alignment`
CSV upload overrides that when an external aligner is available.
"""
import base64
import io
import json
import os
import random
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_dsp import load_wav, resample, save_wav
from .checkpoint import load_generator
from .correction_pipeline import (
    CorrectionRequest,
    VocoderAdapter,
    correct_utterance_detailed,
)
from .corpus import read_alignment_csv
from .errors import InvalidConfig
from .problem_model import PhonemeInventory, PhonemeSegmentation

MAX_UPLOAD_BYTES = 2 * 1024 * 1024
MAX_UPLOAD_SECONDS = 10.0
AUDIO_FILES = ("input.wav", "vocoder_only.wav", "generated.wav")
_STATE_ORDER = {"queued": 0, "running": 1, "done": 2, "failed": 2}


@dataclass(frozen=True)
class Prompt:
    id: str
    word: str
    phonemes: tuple[str, ...]
    target_index: int
    target_phoneme: str
    duration_fractions: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "word": self.word,
            "phonemes": list(self.phonemes),
            "target_index": self.target_index,
            "target_phoneme": self.target_phoneme,
            "duration_fractions": (
                list(self.duration_fractions) if self.duration_fractions else None
            ),
        }


def load_prompts(path, inventory: PhonemeInventory) -> list[Prompt]:
    """Parses and validates the prompt file; any defect refuses startup."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read prompt file {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise InvalidConfig("prompt file must be a JSON list")
    prompts = []
    seen = set()
    for entry in raw:
        try:
            prompt = Prompt(
                id=str(entry["id"]),
                word=str(entry["word"]),
                phonemes=tuple(entry["phonemes"]),
                target_index=int(entry["target_index"]),
                target_phoneme=str(entry["target_phoneme"]),
                duration_fractions=(
                    tuple(float(f) for f in entry["duration_fractions"])
                    if entry.get("duration_fractions")
                    else None
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"malformed prompt entry {entry!r}: {exc}") from exc
        if prompt.id in seen:
            raise InvalidConfig(f"duplicate prompt id {prompt.id!r}")
        seen.add(prompt.id)
        for symbol in prompt.phonemes:
            if symbol not in inventory.symbols:
                raise InvalidConfig(
                    f"prompt {prompt.id!r}: unknown phoneme {symbol!r}"
                )
        if not 0 <= prompt.target_index < len(prompt.phonemes):
            raise InvalidConfig(f"prompt {prompt.id!r}: target index out of range")
        if prompt.target_phoneme not in inventory.symbols:
            raise InvalidConfig(
                f"prompt {prompt.id!r}: unknown target phoneme "
                f"{prompt.target_phoneme!r}"
            )
        if prompt.duration_fractions is not None:
            if len(prompt.duration_fractions) != len(prompt.phonemes):
                raise InvalidConfig(
                    f"prompt {prompt.id!r}: fraction count mismatch"
                )
            if min(prompt.duration_fractions) <= 0:
                raise InvalidConfig(
                    f"prompt {prompt.id!r}: fractions must be positive"
                )
        prompts.append(prompt)
    return prompts


def proportional_segmentation(
    prompt: Prompt, total_frames: int
) -> PhonemeSegmentation:
    """Scales the prompt's expected duration fractions to the recording's
    frame count; equal shares when no fractions are configured."""
    k = len(prompt.phonemes)
    fractions = prompt.duration_fractions or tuple([1.0 / k] * k)
    weights = np.asarray(fractions, dtype=np.float64)
    weights = weights / weights.sum()
    cuts = np.round(np.cumsum(weights)[:-1] * total_frames).astype(int)
    starts = [0]
    for c in cuts:
        starts.append(int(min(max(c, starts[-1] + 1), total_frames - (k - len(starts)))))
    return PhonemeSegmentation(prompt.phonemes, tuple(starts), total_frames)


# -- filesystem job store -----------------------------------------------------------

class JobStore:
    """One directory per job holding job.json plus audio artifacts; job.json
    is replaced atomically so readers never see partial writes."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def job_dir(self, job_id: str) -> Path:
        return self.root / job_id

    def create(self, prompt_id: str) -> dict:
        job_id = uuid.uuid4().hex
        record = {
            "id": job_id,
            "prompt_id": prompt_id,
            "state": "queued",
            "error": None,
            "outputs": [],
        }
        self.job_dir(job_id).mkdir(parents=True)
        self._write(job_id, record)
        return record

    def read(self, job_id: str) -> dict | None:
        path = self.job_dir(job_id) / "job.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def update(self, job_id: str, **fields) -> dict:
        with self._lock:
            record = self.read(job_id)
            if record is None:
                raise KeyError(job_id)
            new_state = fields.get("state")
            if new_state is not None:
                if _STATE_ORDER[new_state] < _STATE_ORDER[record["state"]]:
                    raise ValueError(
                        f"job state cannot regress: {record['state']} -> {new_state}"
                    )
            record.update(fields)
            self._write(job_id, record)
            return record

    def _write(self, job_id: str, record: dict) -> None:
        path = self.job_dir(job_id) / "job.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(record, indent=2), encoding="utf-8")
        os.replace(tmp, path)


# -- reveal tokens -------------------------------------------------------------------

def encode_reveal_token(mapping: dict) -> str:
    return base64.urlsafe_b64encode(json.dumps(mapping, sort_keys=True).encode()).decode()


def decode_reveal_token(token: str) -> dict:
    return json.loads(base64.urlsafe_b64decode(token.encode()).decode())


# -- the app ------------------------------------------------------------------------

def create_app(
    ckpt_dir=None,
    prompts_path=None,
    jobs_dir=None,
    vocoder: VocoderAdapter | None = None,
    max_workers: int = 2,
    ab_seed: int = 0,
):
    from fastapi import FastAPI, File, Form, HTTPException, UploadFile
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import FileResponse, JSONResponse

    ckpt_dir = ckpt_dir or os.environ.get("CKPT_DIR")
    prompts_path = prompts_path or os.environ.get("PROMPTS_PATH")
    jobs_dir = jobs_dir or os.environ.get("JOBS_DIR")
    if not (ckpt_dir and prompts_path and jobs_dir):
        raise InvalidConfig(
            "service needs CKPT_DIR, PROMPTS_PATH and JOBS_DIR (args or env)"
        )

    model, inventory, mel_config = load_generator(ckpt_dir)
    prompts = load_prompts(prompts_path, inventory)
    prompt_map = {p.id: p for p in prompts}
    store = JobStore(jobs_dir)
    executor = ThreadPoolExecutor(max_workers=max_workers)
    vocoder = vocoder or VocoderAdapter()
    tau = model.config.window_frames

    @asynccontextmanager
    async def lifespan(_app):
        yield
        executor.shutdown(wait=False)

    app = FastAPI(title="phonepatch correction service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.prompts = prompts
    app.state.executor = executor

    def run_job(job_id: str) -> None:
        store.update(job_id, state="running")
        try:
            record = store.read(job_id)
            prompt = prompt_map[record["prompt_id"]]
            job_dir = store.job_dir(job_id)
            wave = load_wav(job_dir / "input.wav")
            total_frames = mel_config.frames_for(len(wave))
            align_path = job_dir / "alignment.csv"
            if align_path.exists():
                phonemes, starts, total = read_alignment_csv(align_path)
                seg = PhonemeSegmentation(tuple(phonemes), tuple(starts), total)
            else:
                seg = proportional_segmentation(prompt, total_frames)
            res = correct_utterance_detailed(
                CorrectionRequest(
                    wave, seg, prompt.target_index, prompt.target_phoneme
                ),
                model, inventory, vocoder, mel_config,
            )
            save_wav(job_dir / "vocoder_only.wav", res.vocoded_original)
            save_wav(job_dir / "generated.wav", res.vocoded_corrected)
            store.update(
                job_id, state="done", outputs=["vocoder_only.wav", "generated.wav"]
            )
        except Exception as exc:  # any pipeline failure must land in the job record
            store.update(job_id, state="failed", error=f"{type(exc).__name__}: {exc}")

    @app.get("/api/prompts")
    def list_prompts():
        return [p.to_dict() for p in prompts]

    @app.post("/api/recordings", status_code=202)
    def submit_recording(
        prompt_id: str = Form(...),
        audio: UploadFile = File(...),
        alignment: UploadFile | None = File(None),
    ):
        prompt = prompt_map.get(prompt_id)
        if prompt is None:
            raise HTTPException(404, f"unknown prompt {prompt_id!r}")
        data = audio.file.read()
        if len(data) > MAX_UPLOAD_BYTES:
            raise HTTPException(422, "audio exceeds the 2 MB upload limit")
        try:
            wave = load_wav(io.BytesIO(data))
        except Exception as exc:
            raise HTTPException(422, f"undecodable audio: {exc}") from exc
        if wave.duration > MAX_UPLOAD_SECONDS:
            raise HTTPException(
                422, f"recording longer than {MAX_UPLOAD_SECONDS:.0f} s"
            )
        canonical = resample(wave, mel_config.sample_rate)
        frames = mel_config.frames_for(len(canonical))
        if len(canonical) < mel_config.win_size or frames < tau:
            raise HTTPException(
                422,
                f"utterance too short: {frames} frames, the model needs {tau}",
            )
        align_text = None
        if alignment is not None:
            align_text = alignment.file.read().decode("utf-8", errors="replace")
        record = store.create(prompt_id)
        job_dir = store.job_dir(record["id"])
        save_wav(job_dir / "input.wav", canonical)
        if align_text:
            (job_dir / "alignment.csv").write_text(align_text, encoding="utf-8")
        executor.submit(run_job, record["id"])
        return {"job_id": record["id"], "state": "queued"}

    def require_job(job_id: str) -> dict:
        record = store.read(job_id)
        if record is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return record

    @app.get("/api/corrections/{job_id}")
    def fetch_correction(job_id: str):
        record = require_job(job_id)
        body = {
            "id": record["id"],
            "prompt_id": record["prompt_id"],
            "state": record["state"],
            "error": record["error"],
        }
        if record["state"] == "done":
            body["audio"] = {
                name.removesuffix(".wav"): f"/api/audio/{job_id}/{name}"
                for name in record["outputs"]
            }
        return body

    @app.get("/api/ab/{job_id}")
    def fetch_ab_pair(job_id: str):
        record = require_job(job_id)
        if record["state"] != "done":
            return JSONResponse(
                status_code=409,
                content={"detail": f"job is {record['state']}, not done"},
            )
        swap = random.Random(f"{ab_seed}:{job_id}").random() < 0.5
        first, second = ("generated", "vocoder_only")
        if swap:
            first, second = second, first
        mapping = {"A": first, "B": second}
        return {
            "a_url": f"/api/audio/{job_id}/{first}.wav",
            "b_url": f"/api/audio/{job_id}/{second}.wav",
            "reveal_token": encode_reveal_token(mapping),
        }

    @app.get("/api/audio/{job_id}/{filename}")
    def fetch_audio(job_id: str, filename: str):
        require_job(job_id)
        if filename not in AUDIO_FILES:
            raise HTTPException(404, f"no such artifact {filename!r}")
        path = store.job_dir(job_id) / filename
        if not path.exists():
            raise HTTPException(404, f"artifact {filename!r} not ready")
        return FileResponse(path, media_type="audio/wav")

    return app


def run_service(
    ckpt_dir=None, prompts_path=None, jobs_dir=None, port: int | None = None,
    host: str = "127.0.0.1",
):
    import uvicorn

    app = create_app(ckpt_dir=ckpt_dir, prompts_path=prompts_path, jobs_dir=jobs_dir)
    port = port if port is not None else int(os.environ.get("PORT", "8000"))
    uvicorn.run(app, host=host, port=port)
