import subprocess


def archive(name):
    return subprocess.call("tar czf out.tgz " + name, shell=True)
