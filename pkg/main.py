import logging

from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse
from fastapi.middleware.cors import CORSMiddleware

from config import configure_logging
from exceptions import (
    ConfigError,
    DatasetError,
    DomainError,
    LinkAdaptationError,
    TraceParseError,
)
from routers import catalog, experiments, fqi, phy

configure_logging()
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="Link Adaptation Toolkit",
    description="""
    Инструментарий для исследования адаптации канала (выбора MCS) в 5G NR.

    Основные возможности:

    Таблица MCS**: 29 схем модуляции и кодирования, номинальная спектральная эффективность
    PHY абстракция**: логистическая модель BLER от SINR
    Эксперименты**: OLLA, SALAD и PPO-агент с предикторами SINR (oracle, dcqi, kf, dt, rf, oco)
    Сравнение**: парные прогоны на одних и тех же трассах канала, ΔSE%
    Offline FQI**: обучение Q-функции по логам и сравнение с поведенческой политикой

    Длительные эксперименты

    Полные сетки (5 сидов × 10 реализаций) запускаются через CLI:
    python experiment_cli.py run --config experiment.cfg
    """,
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc"
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Exception handlers
@app.exception_handler(ConfigError)
async def config_exception_handler(request: Request, exc: ConfigError):
    """Handle invalid experiment configurations"""
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content={"detail": str(exc)}
    )


@app.exception_handler(DomainError)
async def domain_exception_handler(request: Request, exc: DomainError):
    """Handle out-of-domain values"""
    return JSONResponse(
        status_code=status.HTTP_400_BAD_REQUEST,
        content={"detail": str(exc)}
    )


@app.exception_handler(TraceParseError)
@app.exception_handler(DatasetError)
async def input_file_exception_handler(request: Request, exc: LinkAdaptationError):
    """Handle malformed traces and datasets"""
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={"detail": str(exc), "line": getattr(exc, "line", None)}
    )


@app.exception_handler(LinkAdaptationError)
async def toolkit_exception_handler(request: Request, exc: LinkAdaptationError):
    """Handle remaining toolkit errors"""
    logger.error("request %s failed: %s", request.url.path, exc)
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content={"detail": str(exc)}
    )


# Include routers
app.include_router(catalog.router)
app.include_router(phy.router)
app.include_router(experiments.router)
app.include_router(fqi.router)


@app.get("/", tags=["Root"])
async def root():
    """Root endpoint"""
    return {
        "message": "Link Adaptation Toolkit API",
        "docs": "/docs",
        "redoc": "/redoc"
    }


@app.get("/health", tags=["Health"])
async def health_check():
    """Health check endpoint"""
    return {"status": "healthy"}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run("main:app", host="0.0.0.0", port=8000, reload=True)
