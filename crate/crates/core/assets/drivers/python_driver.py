import ast
import io
import json
import os
import sys
import traceback
from contextlib import redirect_stderr, redirect_stdout

MARK = "\x1eCOPILOT "
END = "\x1eEND"

proto = sys.stdout
scratch = sys.argv[1]
namespace = {"__name__": "__main__"}
figure_count = 0


def reply(obj):
    proto.write(MARK + json.dumps(obj) + "\n")
    proto.flush()


def collect_figures():
    global figure_count
    plt = sys.modules.get("matplotlib.pyplot")
    if plt is None:
        return []
    paths = []
    for num in plt.get_fignums():
        figure_count += 1
        path = os.path.join(scratch, "figure_%d.png" % figure_count)
        plt.figure(num).savefig(path, format="png")
        paths.append(path)
    plt.close("all")
    return paths


def run(code):
    out, err = io.StringIO(), io.StringIO()
    error = None
    with redirect_stdout(out), redirect_stderr(err):
        try:
            tree = ast.parse(code, mode="exec")
            last = None
            if tree.body and isinstance(tree.body[-1], ast.Expr):
                last = ast.Expression(tree.body.pop().value)
            exec(compile(tree, "<cell>", "exec"), namespace)
            if last is not None:
                value = eval(compile(last, "<cell>", "eval"), namespace)
                if value is not None:
                    print(repr(value))
        except SyntaxError as e:
            error = "".join(traceback.format_exception_only(type(e), e)).rstrip()
        except BaseException as e:
            tb = e.__traceback__.tb_next if e.__traceback__ else None
            error = "".join(traceback.format_exception(type(e), e, tb)).rstrip()
    try:
        images = collect_figures()
    except Exception as e:
        images = []
        err.write("figure capture failed: %s\n" % e)
    return {"stdout": out.getvalue(), "stderr": err.getvalue(), "error": error, "images": images}


reply({"ready": True})
buf = []
for line in sys.stdin:
    line = line.rstrip("\n")
    if line == END:
        reply(run("\n".join(buf)))
        buf = []
    else:
        buf.append(line)
