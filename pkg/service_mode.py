"""
后台服务模式 - 包装器
提供实验运行与结果查询的 HTTP API
"""
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from typing import Optional, Dict, Any
import json
import os
import time
import uvicorn

from core import FloorLabError, __version__
from lab import FloorLab

OUTPUT_DIR = os.environ.get("FLOORLAB_OUTPUT_DIR", "runs")

# 错误类别 -> HTTP 状态码（配置 1、数据 2、数值 3）
STATUS_BY_EXIT_CODE = {1: 400, 2: 422, 3: 500}


def create_app(output_dir: str = OUTPUT_DIR) -> FastAPI:
    """创建服务应用；测试时传入临时目录"""
    app = FastAPI(title="FloorLab Service", version=__version__)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )
    lab = FloorLab(output_dir=output_dir)

    @app.exception_handler(FloorLabError)
    async def floorlab_error(_request, exc: FloorLabError):
        return JSONResponse(
            status_code=STATUS_BY_EXIT_CODE.get(exc.exit_code, 500),
            content={"success": False, "error": str(exc), "type": type(exc).__name__},
        )

    # ========== 请求模型 ==========
    class RunRequest(BaseModel):
        config: Dict[str, Any] = Field(description="实验配置（与配置文件相同的 JSON 对象）")
        seed: Optional[int] = Field(default=None, description="覆盖 master_seed")
        desk_scale: Optional[bool] = Field(default=None, description="MNIST 桌面规模")

    # ========== API 路由 ==========

    @app.get("/api/health")
    async def health():
        return {"status": "running", "version": __version__, "timestamp": time.time()}

    @app.get("/api/experiments")
    async def experiments():
        return {"experiments": [
            {"name": name, "description": description}
            for name, description in lab.list_experiments().items()
        ]}

    @app.get("/api/experiments/{name}/config")
    async def experiment_config(name: str):
        return {"experiment": name, "config": json.loads(lab.show_config(name))}

    # ---------- 运行 ----------

    @app.post("/api/runs")
    def create_run(req: RunRequest):
        """同步执行一次实验（在线程池中运行，不阻塞事件循环）"""
        text = json.dumps(req.config, ensure_ascii=False, indent=2)
        manifest = lab.run_text(text, master_seed=req.seed, desk_scale=req.desk_scale)
        return {"success": True, "run_id": manifest.run_id, "manifest": manifest.to_dict()}

    @app.get("/api/runs")
    async def list_runs():
        return {"runs": lab.list_runs()}

    @app.get("/api/runs/{run_id}")
    async def get_run(run_id: str):
        detail = lab.get_run(run_id)
        if detail is None:
            raise HTTPException(status_code=404, detail="Run not found")
        return detail

    @app.delete("/api/runs/{run_id}")
    async def delete_run(run_id: str):
        if not lab.remove_run(run_id):
            raise HTTPException(status_code=404, detail="Run not found")
        return {"success": True, "deleted": run_id}

    return app


app = create_app()

if __name__ == "__main__":
    print("🚀 FloorLab 服务启动中...")
    print(f"   结果目录: {OUTPUT_DIR}")
    print(f"   API 文档: http://localhost:8000/docs")
    uvicorn.run(app, host="0.0.0.0", port=8000)
